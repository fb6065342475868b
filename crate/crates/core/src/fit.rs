//! Weekly (beta, gamma) estimation from daily compartment trajectories.
//!
//! The one-step SIR update is linear in (beta, gamma), so the least-squares
//! problem over a window of observed states
//!
//! ```text
//! min  sum_t || x_t - x_hat_t ||^2
//!      + lambda1 (beta - beta0)^2 + lambda2 (gamma - gamma0)^2
//! ```
//!
//! with x_t = [S_t, I_t] has a closed-form solution via 2x2 normal equations.
//! Negative solutions are clamped to zero and flagged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sir::{RateParams, SirState};

/// Days per fitted window; the weekly cadence of the whole pipeline.
pub const DAYS_PER_WEEK: usize = 7;

/// Relative threshold under which the 2x2 normal matrix counts as singular.
const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("window has {len} states; need at least 2")]
    WindowTooShort { len: usize },
    #[error("states in the window have different populations ({a} vs {b})")]
    MismatchedPopulation { a: f64, b: f64 },
    #[error("unidentifiable parameter(s): {which} (no information in window and no prior)")]
    Unidentifiable { which: &'static str },
    #[error("regularization weights must be non-negative")]
    NegativeLambda,
    #[error("daily series of {len} states is not 7k+1 for k >= 1")]
    BadSeriesLength { len: usize },
    #[error("week {week_index}: {source}")]
    Week {
        week_index: usize,
        #[source]
        source: Box<FitError>,
    },
}

/// Regularization weights and prior means for the window fit. With both
/// lambdas zero (the default) the fit is plain least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta0: f64,
    pub gamma0: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            beta0: 0.0,
            gamma0: 0.0,
        }
    }
}

impl FitConfig {
    /// Gaussian priors beta ~ N(beta0, sigma_b^2), gamma ~ N(gamma0, sigma_g^2)
    /// correspond to lambda = 1 / (2 sigma^2).
    pub fn with_gaussian_priors(beta0: f64, sigma_b2: f64, gamma0: f64, sigma_g2: f64) -> Self {
        Self {
            lambda1: 1.0 / (2.0 * sigma_b2),
            lambda2: 1.0 / (2.0 * sigma_g2),
            beta0,
            gamma0,
        }
    }
}

/// Result of fitting one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFit {
    pub params: RateParams,
    /// Sum of squared one-step state-prediction errors at the returned
    /// parameters (persons^2).
    pub residual: f64,
    pub clamped_beta: bool,
    pub clamped_gamma: bool,
}

/// Fitted rates for one week of daily data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyParams {
    pub week_index: usize,
    pub beta: f64,
    pub gamma: f64,
    pub residual: f64,
    /// True if either rate was clamped up to zero.
    pub clamped: bool,
}

impl WeeklyParams {
    pub fn rates(&self) -> RateParams {
        RateParams {
            beta: self.beta,
            gamma: self.gamma,
        }
    }
}

/// Fit (beta, gamma) to consecutive daily states by regularized least squares.
///
/// Every consecutive pair contributes an S-equation and an I-equation row;
/// the normal equations are solved exactly. Errors if the normal matrix is
/// singular, e.g. I = 0 throughout the window with no prior.
pub fn fit_window(states: &[SirState], config: &FitConfig) -> Result<WindowFit, FitError> {
    if states.len() < 2 {
        return Err(FitError::WindowTooShort { len: states.len() });
    }
    if config.lambda1 < 0.0 || config.lambda2 < 0.0 {
        return Err(FitError::NegativeLambda);
    }
    let n = states[0].n();
    for st in states {
        if (st.n() - n).abs() > 1e-9 * n {
            return Err(FitError::MismatchedPopulation { a: n, b: st.n() });
        }
    }

    // Accumulate A^T A and A^T d over all transitions, where per transition
    //   A = [[-a, 0], [a, -I]],  a = S*I/N,  d = [dS, dI].
    let (mut h11, mut h12, mut h22) = (0.0, 0.0, 0.0);
    let (mut b1, mut b2) = (0.0, 0.0);
    for pair in states.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let a = prev.s() * prev.i() / n;
        let ds = next.s() - prev.s();
        let di = next.i() - prev.i();
        h11 += 2.0 * a * a;
        h12 += -a * prev.i();
        h22 += prev.i() * prev.i();
        b1 += a * (di - ds);
        b2 += -prev.i() * di;
    }

    let g11 = h11 + config.lambda1;
    let g22 = h22 + config.lambda2;
    let g12 = h12;
    let c1 = b1 + config.lambda1 * config.beta0;
    let c2 = b2 + config.lambda2 * config.gamma0;

    let beta_dead = g11 <= 0.0;
    let gamma_dead = g22 <= 0.0;
    if beta_dead || gamma_dead {
        return Err(FitError::Unidentifiable {
            which: match (beta_dead, gamma_dead) {
                (true, true) => "beta and gamma",
                (true, false) => "beta",
                (false, true) => "gamma",
                (false, false) => unreachable!(),
            },
        });
    }
    let det = g11 * g22 - g12 * g12;
    if det <= SINGULAR_EPS * g11 * g22 {
        return Err(FitError::Unidentifiable {
            which: "beta and gamma (collinear design)",
        });
    }

    let beta_hat = (c1 * g22 - c2 * g12) / det;
    let gamma_hat = (g11 * c2 - g12 * c1) / det;
    let clamped_beta = beta_hat < 0.0;
    let clamped_gamma = gamma_hat < 0.0;
    let beta = beta_hat.max(0.0);
    let gamma = gamma_hat.max(0.0);

    let residual = window_objective(states, beta, gamma);
    Ok(WindowFit {
        params: RateParams { beta, gamma },
        residual,
        clamped_beta,
        clamped_gamma,
    })
}

/// Sum of squared one-step state-prediction errors over a window at the given
/// rates (the data term of the fitting objective).
pub fn window_objective(states: &[SirState], beta: f64, gamma: f64) -> f64 {
    let n = states[0].n();
    let mut total = 0.0;
    for pair in states.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let a = prev.s() * prev.i() / n;
        let es = -a * beta;
        let ei = a * beta - prev.i() * gamma;
        let rs = (next.s() - prev.s()) - es;
        let ri = (next.i() - prev.i()) - ei;
        total += rs * rs + ri * ri;
    }
    total
}

/// Full fitting objective including the prior penalty.
pub fn regularized_objective(states: &[SirState], config: &FitConfig, beta: f64, gamma: f64) -> f64 {
    window_objective(states, beta, gamma)
        + config.lambda1 * (beta - config.beta0).powi(2)
        + config.lambda2 * (gamma - config.gamma0).powi(2)
}

/// Fit one `WeeklyParams` per seven-day window of a daily state series.
///
/// The series must hold `7k + 1` states: the leading state seeds window 0,
/// and each window is fitted on its seven daily transitions, seeded by the
/// last state of the previous window.
pub fn fit_weekly_series(
    daily_states: &[SirState],
    config: &FitConfig,
) -> Result<Vec<WeeklyParams>, FitError> {
    let len = daily_states.len();
    if len < DAYS_PER_WEEK + 1 || (len - 1) % DAYS_PER_WEEK != 0 {
        return Err(FitError::BadSeriesLength { len });
    }
    let weeks = (len - 1) / DAYS_PER_WEEK;
    let mut out = Vec::with_capacity(weeks);
    for week_index in 0..weeks {
        let start = week_index * DAYS_PER_WEEK;
        let window = &daily_states[start..=start + DAYS_PER_WEEK];
        let fit = fit_window(window, config).map_err(|source| FitError::Week {
            week_index,
            source: Box::new(source),
        })?;
        out.push(WeeklyParams {
            week_index,
            beta: fit.params.beta,
            gamma: fit.params.gamma,
            residual: fit.residual,
            clamped: fit.clamped_beta || fit.clamped_gamma,
        });
    }
    Ok(out)
}
