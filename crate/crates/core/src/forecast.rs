//! Mixture-of-experts point forecasts of weekly new infections.
//!
//! Two experts feed every forecast week: the trend-following SIR (tf-v-SIR)
//! and SLOW, which repeats the last observed week's count. The trend-change
//! distribution weights them: `point = p(CT=0) * tf + p(CT!=0) * slow`.
//!
//! Trend-change lags are observed policy changes for one- and two-week
//! forecasts; further out the missing lags are marginalized over the policy
//! chain. Forecasts chain on their own mixture points: after each week the
//! simulated state is advanced with rates solved so that week's cases equal
//! the mixture point, except that a pure trend week (weight exactly one)
//! reuses the trend expert's own rates and state so the degenerate mixture
//! reproduces tf-v-SIR bit for bit.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{first_sunday, PolicyWeek, RegionView};
use crate::fit::{fit_weekly_series, FitConfig, FitError, WeeklyParams, DAYS_PER_WEEK};
use crate::pgm::{
    ct_distribution, forecast_policy_chain, Change, ChangeDist, CpLags, PgmConfig, PgmError,
    PolicyChainStep,
};
use crate::sir::{new_infections, step, RateParams, SirError, SirState};
use crate::trend::{tfvsir_forecast, TrendModel};
use crate::Horizon;

/// Minimum fitted weeks before a mixture forecast is attempted.
pub const MIN_FORECAST_WEEKS: usize = 5;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("cold start: {weeks} fitted weeks available, need at least {needed}")]
    ColdStart { weeks: usize, needed: usize },
    #[error("no complete Sunday-to-Saturday week in the data")]
    NoCompleteWeeks,
    #[error("no policy week starting {week}")]
    PolicyGap { week: NaiveDate },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sir(#[from] SirError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
}

/// Weekly-aligned view of a region: fitted rates, boundary states, observed
/// totals and policy weeks, all on the same Sunday grid.
#[derive(Debug, Clone)]
pub struct RegionSnapshot {
    pub region: String,
    pub population: f64,
    /// Sunday of each complete observed week.
    pub week_starts: Vec<NaiveDate>,
    /// Boundary states: `weekly_states[0]` seeds week 0, `weekly_states[k+1]`
    /// is the end of week k. One more entry than weeks.
    pub weekly_states: Vec<SirState>,
    /// Reported (cleaned) weekly new-infection totals.
    pub weekly_cases: Vec<f64>,
    pub weekly_params: Vec<WeeklyParams>,
    /// Policy record per observed week, same indexing as `week_starts`.
    pub policy_weeks: Vec<PolicyWeek>,
}

impl RegionSnapshot {
    pub fn weeks(&self) -> usize {
        self.week_starts.len()
    }

    /// Sunday of the last observed week.
    pub fn origin_week(&self) -> NaiveDate {
        *self.week_starts.last().expect("snapshot has weeks")
    }
}

/// Align a processed region view on the Sunday grid and fit its weekly rates.
pub fn prepare(view: &RegionView, fit_config: &FitConfig) -> Result<RegionSnapshot, ForecastError> {
    let start = first_sunday(&view.daily.dates).ok_or(ForecastError::NoCompleteWeeks)?;
    let weeks = (view.daily.dates.len() - start) / DAYS_PER_WEEK;
    if weeks == 0 {
        return Err(ForecastError::NoCompleteWeeks);
    }

    let fit_states = &view.states[start..=start + weeks * DAYS_PER_WEEK];
    let weekly_params = fit_weekly_series(fit_states, fit_config)?;

    let mut week_starts = Vec::with_capacity(weeks);
    let mut weekly_cases = Vec::with_capacity(weeks);
    let mut weekly_states = Vec::with_capacity(weeks + 1);
    weekly_states.push(view.states[start]);
    for k in 0..weeks {
        let lo = start + k * DAYS_PER_WEEK;
        week_starts.push(view.daily.dates[lo]);
        weekly_cases.push(view.daily.new_infections[lo..lo + DAYS_PER_WEEK].iter().sum());
        weekly_states.push(view.states[lo + DAYS_PER_WEEK]);
    }

    let mut policy_weeks = Vec::with_capacity(weeks);
    for start_date in &week_starts {
        let found = view
            .policy_weeks
            .iter()
            .find(|w| w.start == *start_date)
            .copied()
            .ok_or(ForecastError::PolicyGap { week: *start_date })?;
        policy_weeks.push(found);
    }

    Ok(RegionSnapshot {
        region: view.region.clone(),
        population: view.population,
        week_starts,
        weekly_states,
        weekly_cases,
        weekly_params,
        policy_weeks,
    })
}

/// The SLOW baseline: repeat the last observed week's count.
pub fn slow_forecast(last_observed_week_cases: f64, horizon: Horizon) -> Vec<f64> {
    vec![last_observed_week_cases; horizon.weeks() as usize]
}

/// One mixture forecast step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forecast {
    pub region: String,
    /// Sunday of the last observed week.
    pub origin_week: NaiveDate,
    pub horizon: u8,
    /// Predicted new infections for the target week.
    pub point: f64,
    /// p(CT = 0): weight on the trend-following expert.
    pub weight_trend: f64,
    /// p(CT != 0): weight on SLOW.
    pub weight_slow: f64,
    /// Policy-change distributions (down, steady, up) marginalized over for
    /// this step's unobserved lags; empty while all lags are observed.
    pub cp_forecasts: Vec<[f64; 3]>,
}

/// Mixture forecast for 1..=horizon weeks past the snapshot's origin.
pub fn mixture_forecast(
    snapshot: &RegionSnapshot,
    pgm: &PgmConfig,
    trend: &TrendModel,
    horizon: Horizon,
) -> Result<Vec<Forecast>, ForecastError> {
    let weeks = snapshot.weeks();
    if weeks < MIN_FORECAST_WEEKS {
        return Err(ForecastError::ColdStart {
            weeks,
            needed: MIN_FORECAST_WEEKS,
        });
    }
    let origin = weeks - 1; // index of the last observed week
    let origin_state = *snapshot.weekly_states.last().expect("has states");
    let slow_point = *snapshot.weekly_cases.last().expect("has weeks");

    // Policy chain for the lags that are not observed yet (steps t+1, t+2
    // feed the three- and four-week trend-change lags). Its urgency features
    // use pure trend-following projections.
    let chain_steps = (horizon.weeks() as usize).saturating_sub(2);
    let chain: Vec<PolicyChainStep> = if chain_steps > 0 {
        let projections = if chain_steps > 1 {
            tfvsir_forecast(
                &origin_state,
                &snapshot.weekly_params,
                trend,
                Horizon::new((chain_steps - 1) as u8).expect("1..=2"),
            )?
            .weekly_cases
        } else {
            Vec::new()
        };
        forecast_policy_chain(
            snapshot.policy_weeks[origin].weeks_since_change,
            &snapshot.weekly_states,
            &projections,
            pgm,
            Horizon::new(chain_steps as u8).expect("1..=2"),
        )?
    } else {
        Vec::new()
    };

    // Lag distribution for a global week index: observed weeks are point
    // masses, future weeks come from the chain.
    let lag_dist = |week: i64| -> ChangeDist {
        if week <= origin as i64 {
            ChangeDist::certain(snapshot.policy_weeks[week as usize].cp)
        } else {
            chain[(week - 1) as usize - origin].cp
        }
    };

    let mut beta_lags = last3(&snapshot.weekly_params, |w| w.beta);
    let mut gamma_lags = last3(&snapshot.weekly_params, |w| w.gamma);
    let mut cur_state = origin_state;
    let mut out = Vec::with_capacity(horizon.weeks() as usize);

    for h in horizon.steps() {
        // Trend expert for this week.
        let rates = crate::trend::predict_params(trend, beta_lags, gamma_lags);
        let mut tf_state = cur_state;
        for _ in 0..DAYS_PER_WEEK {
            tf_state = step(&tf_state, &rates)?;
        }
        let tf_point = new_infections(&cur_state, &tf_state);

        // Trend-change distribution from lags (t+h-4, t+h-3, t+h-2).
        let lag_weeks = [
            origin as i64 + h as i64 - 4,
            origin as i64 + h as i64 - 3,
            origin as i64 + h as i64 - 2,
        ];
        let ct = marginal_ct(&lag_weeks.map(&lag_dist), &pgm.ct)?;
        let weight_trend = ct.p(Change::Steady);
        let weight_slow = 1.0 - weight_trend;
        let point = weight_trend * tf_point + weight_slow * slow_point;

        let cp_forecasts: Vec<[f64; 3]> = lag_weeks
            .iter()
            .filter(|w| **w > origin as i64)
            .map(|w| chain[(*w - 1) as usize - origin].cp.as_array())
            .collect();

        out.push(Forecast {
            region: snapshot.region.clone(),
            origin_week: snapshot.origin_week(),
            horizon: h,
            point,
            weight_trend,
            weight_slow,
            cp_forecasts,
        });

        // Chain the state and lag window on this week's outcome.
        if weight_trend == 1.0 {
            cur_state = tf_state;
            beta_lags = [rates.beta, beta_lags[0], beta_lags[1]];
            gamma_lags = [rates.gamma, gamma_lags[0], gamma_lags[1]];
        } else {
            let (eff_rates, eff_state) = rates_matching_cases(&cur_state, rates.gamma, point)?;
            cur_state = eff_state;
            beta_lags = [eff_rates.beta, beta_lags[0], beta_lags[1]];
            gamma_lags = [eff_rates.gamma, gamma_lags[0], gamma_lags[1]];
        }
    }
    Ok(out)
}

fn last3<F: Fn(&WeeklyParams) -> f64>(weekly: &[WeeklyParams], get: F) -> [f64; 3] {
    let k = weekly.len();
    [get(&weekly[k - 1]), get(&weekly[k - 2]), get(&weekly[k - 3])]
}

/// Marginalize the trend-change CPT over independent lag distributions.
/// The result is renormalized so point-mass lags stay exact.
fn marginal_ct(lags: &[ChangeDist; 3], cpt: &crate::pgm::Cpt) -> Result<ChangeDist, PgmError> {
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for a in Change::ALL {
        let pa = lags[0].p(a);
        if pa == 0.0 {
            continue;
        }
        for b in Change::ALL {
            let pb = lags[1].p(b);
            if pb == 0.0 {
                continue;
            }
            for c in Change::ALL {
                let w = pa * pb * lags[2].p(c);
                if w == 0.0 {
                    continue;
                }
                let row = ct_distribution(
                    CpLags {
                        three_weeks_ago: a,
                        two_weeks_ago: b,
                        one_week_ago: c,
                    },
                    cpt,
                )?;
                for t in 0..3 {
                    acc[t] += w * row.as_array()[t];
                }
                total += w;
            }
        }
    }
    for t in &mut acc {
        *t /= total;
    }
    ChangeDist::new(acc, "marginal CT")
}

/// Solve for rates that make the next week's simulated new infections equal
/// `target`, holding gamma fixed. Weekly cases are monotone in beta, so a
/// fixed-iteration bisection is exact to machine precision and fully
/// deterministic. If even a huge beta cannot reach the target (tiny infected
/// pool), the largest probed beta is used.
fn rates_matching_cases(
    state: &SirState,
    gamma: f64,
    target: f64,
) -> Result<(RateParams, SirState), SirError> {
    let week_cases = |beta: f64| -> Result<(f64, SirState), SirError> {
        let rates = RateParams { beta, gamma };
        let mut cur = *state;
        for _ in 0..DAYS_PER_WEEK {
            cur = step(&cur, &rates)?;
        }
        Ok((new_infections(state, &cur), cur))
    };

    let target = target.max(0.0);
    let mut hi = 1.0;
    let mut hi_cases = week_cases(hi)?.0;
    let mut doublings = 0;
    while hi_cases < target && doublings < 60 {
        hi *= 2.0;
        hi_cases = week_cases(hi)?.0;
        doublings += 1;
    }
    if hi_cases < target {
        let (_, end) = week_cases(hi)?;
        return Ok((RateParams { beta: hi, gamma }, end));
    }

    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if week_cases(mid)?.0 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, end) = week_cases(hi)?;
    Ok((RateParams { beta: hi, gamma }, end))
}
