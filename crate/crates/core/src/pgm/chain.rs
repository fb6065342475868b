//! Multi-week policy-change inference.
//!
//! From the forecast origin, each future week's policy-change distribution is
//! obtained by marginalizing over willingness and urgency. Urgency features
//! come from observed weekly states at the origin and from trend-following
//! case projections afterwards. Willingness depends on weeks since the last
//! change, which is known at the origin but becomes a distribution once
//! changes themselves are probabilistic; that distribution is the exact
//! forward-filtered state of the chain, so the returned marginals match
//! brute-force enumeration over all joint paths.

use crate::sir::{new_infections, SirState};
use crate::Horizon;

use super::{
    cp_distribution, urgency_distribution, willingness_distribution, Change, ChangeDist,
    PgmConfig, PgmError, UrgencyFeatures,
};

/// One inferred step of the policy chain.
#[derive(Debug, Clone)]
pub struct PolicyChainStep {
    /// Distribution of the policy change for this future week.
    pub cp: ChangeDist,
    /// Urgency distribution that fed it.
    pub urgency: ChangeDist,
    /// Marginal probability that the government was willing to act.
    pub p_willing: f64,
}

/// Forecast the policy-change distribution one to four weeks out.
///
/// * `weeks_since_change` — whole weeks since the last observed change.
/// * `weekly_states` — observed weekly boundary states through the origin
///   (at least three, most recent last).
/// * `projected_cases` — trend-following projections of weekly new
///   infections beyond the origin; `horizon - 1` values are consumed.
pub fn forecast_policy_chain(
    weeks_since_change: u32,
    weekly_states: &[SirState],
    projected_cases: &[f64],
    pgm: &PgmConfig,
    horizon: Horizon,
) -> Result<Vec<PolicyChainStep>, PgmError> {
    let k = weekly_states.len();
    if k < 3 {
        return Err(PgmError::NotEnoughHistory {
            reason: format!("{k} weekly states; need 3 for the urgency features"),
        });
    }
    let steps = horizon.weeks() as usize;
    if projected_cases.len() + 1 < steps {
        return Err(PgmError::NotEnoughHistory {
            reason: format!(
                "{} projected weeks for a {steps}-week chain",
                projected_cases.len()
            ),
        });
    }
    let n = weekly_states[k - 1].n();
    let per_100k = |cases: f64| 1e5 * cases / n;

    // Cases per 100K for the origin week and every projected week, preceded
    // by the week before the origin so the first weekly change is defined.
    let c_prev = per_100k(new_infections(&weekly_states[k - 3], &weekly_states[k - 2]));
    let mut cs = Vec::with_capacity(steps + 1);
    cs.push(c_prev);
    cs.push(per_100k(new_infections(
        &weekly_states[k - 2],
        &weekly_states[k - 1],
    )));
    for h in 0..steps.saturating_sub(1) {
        cs.push(per_100k(projected_cases[h].max(0.0)));
    }

    // Exact forward filtering over the weeks-since-change state.
    let mut w_dist: Vec<(u32, f64)> = vec![(weeks_since_change, 1.0)];
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let c = cs[step + 1];
        let v = cs[step + 1] - cs[step];
        let urgency = urgency_distribution(UrgencyFeatures::new(c, v)?, &pgm.urgency);

        // Marginal CP over (W -> O) x U, and per-W change probability for the
        // state update.
        let mut cp = [0.0; 3];
        let mut p_willing = 0.0;
        let mut q_by_w = Vec::with_capacity(w_dist.len());
        for (w, pw) in &w_dist {
            let o = willingness_distribution(*w, &pgm.willingness)?;
            p_willing += pw * o[1];
            let mut q = 0.0;
            for (o_idx, po) in o.iter().enumerate() {
                for u in Change::ALL {
                    let pu = urgency.p(u);
                    let row = cp_distribution(o_idx == 1, u, &pgm.cp)?;
                    for target in Change::ALL {
                        let contribution = po * pu * row.p(target);
                        cp[target.index()] += pw * contribution;
                        if target != Change::Steady {
                            q += contribution;
                        }
                    }
                }
            }
            q_by_w.push(q);
        }
        // Renormalize away float summation dust so deterministic tables stay
        // exact point masses.
        let total: f64 = cp.iter().sum();
        for p in &mut cp {
            *p /= total;
        }
        let cp = ChangeDist::new(cp, &format!("policy chain step {}", step + 1))?;

        // W' = 0 on a change, W + 1 otherwise.
        let mut no_change_mass: Vec<(u32, f64)> = Vec::with_capacity(w_dist.len());
        let mut change_mass = 0.0;
        for ((w, pw), q) in w_dist.iter().zip(&q_by_w) {
            change_mass += pw * q;
            no_change_mass.push((w + 1, pw * (1.0 - q)));
        }
        let mut next = vec![(0u32, change_mass)];
        next.extend(no_change_mass);
        w_dist = next;

        out.push(PolicyChainStep {
            cp,
            urgency,
            p_willing,
        });
    }
    Ok(out)
}
