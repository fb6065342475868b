//! AR(3) evolution of the weekly rates and the trend-following forecaster.
//!
//! Each weekly rate is modelled as a linear-Gaussian function of its three
//! previous values,
//!
//! ```text
//! beta_{t+1} ~ N(a0 + a1 b_t + a2 b_{t-1} + a3 b_{t-2}, sigma^2)
//! ```
//!
//! fitted by ordinary least squares (the Gaussian MLE). The same structure
//! can be read as a level/velocity/acceleration model; `theta_to_alpha` maps
//! between the two parameterizations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::fit::WeeklyParams;
use crate::sir::{new_infections, step, RateParams, SirError, SirState};
use crate::Horizon;

/// Weeks of history needed before an AR fit is attempted.
pub const MIN_HISTORY_WEEKS: usize = 5;

/// Relative singular-value cutoff below which a design matrix counts as
/// rank-deficient.
const RANK_EPS: f64 = 1e-9;

/// How a rate's trend coefficients were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendFit {
    /// Full AR(3) least squares.
    Ar3,
    /// The AR(3) design was rank-deficient; an intercept + single-lag model
    /// fit the data instead (exact for histories that follow an AR(1) law).
    Ar1,
    /// Not enough information for any regression; next week repeats this week.
    Persistence,
}

/// AR(3) coefficients and residual variances for both rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    /// Intercept and lag coefficients for beta, most recent lag first.
    pub alpha: [f64; 4],
    /// Intercept and lag coefficients for gamma, most recent lag first.
    pub omega: [f64; 4],
    pub sigma_beta2: f64,
    pub sigma_gamma2: f64,
    pub beta_fit: TrendFit,
    pub gamma_fit: TrendFit,
}

pub const PERSISTENCE: [f64; 4] = [0.0, 1.0, 0.0, 0.0];

impl TrendModel {
    /// Pure persistence model for both rates.
    pub fn persistence() -> Self {
        Self {
            alpha: PERSISTENCE,
            omega: PERSISTENCE,
            sigma_beta2: 0.0,
            sigma_gamma2: 0.0,
            beta_fit: TrendFit::Persistence,
            gamma_fit: TrendFit::Persistence,
        }
    }
}

/// Fit the trend model to fitted weekly rates.
///
/// With fewer than [`MIN_HISTORY_WEEKS`] values, or a rank-deficient design
/// (e.g. a constant history), the affected rate degrades to a simpler model
/// and records that in its [`TrendFit`] flag.
pub fn fit_trend(weekly: &[WeeklyParams]) -> TrendModel {
    let betas: Vec<f64> = weekly.iter().map(|w| w.beta).collect();
    let gammas: Vec<f64> = weekly.iter().map(|w| w.gamma).collect();
    let (alpha, sigma_beta2, beta_fit) = fit_series(&betas);
    let (omega, sigma_gamma2, gamma_fit) = fit_series(&gammas);
    TrendModel {
        alpha,
        omega,
        sigma_beta2,
        sigma_gamma2,
        beta_fit,
        gamma_fit,
    }
}

fn fit_series(values: &[f64]) -> ([f64; 4], f64, TrendFit) {
    if values.len() >= MIN_HISTORY_WEEKS {
        if let Some((coef, sigma2)) = ols_lags(values, 3) {
            return (coef, sigma2, TrendFit::Ar3);
        }
        if let Some((coef, sigma2)) = ols_lags(values, 1) {
            return (coef, sigma2, TrendFit::Ar1);
        }
    }
    let sigma2 = persistence_mse(values);
    (PERSISTENCE, sigma2, TrendFit::Persistence)
}

/// OLS of v[t] on (1, v[t-1], ..., v[t-lags]); returns the coefficients
/// padded to [intercept, lag1, lag2, lag3] plus the mean squared residual.
/// None when the design is rank-deficient or has too few rows.
fn ols_lags(values: &[f64], lags: usize) -> Option<([f64; 4], f64)> {
    let cols = lags + 1;
    let rows = values.len().saturating_sub(lags);
    if rows < cols {
        return None;
    }
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for r in 0..rows {
        let t = lags + r; // predict values[t] from values[t-1..t-lags]
        x[(r, 0)] = 1.0;
        for l in 1..=lags {
            x[(r, l)] = values[t - l];
        }
        y[r] = values[t];
    }

    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    if max_sv <= 0.0 || svd.singular_values.min() <= RANK_EPS * max_sv {
        return None;
    }
    let sol = svd.solve(&y, 0.0).ok()?;

    let mut coef = [0.0; 4];
    for c in 0..cols {
        coef[c] = sol[c];
    }
    let resid = &x * &sol - &y;
    let sigma2 = resid.norm_squared() / rows as f64;
    Some((coef, sigma2))
}

fn persistence_mse(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    values
        .windows(2)
        .map(|w| (w[1] - w[0]).powi(2))
        .sum::<f64>()
        / (values.len() - 1) as f64
}

/// Conditional-mean prediction of next week's rates from the last three
/// values of each, ordered most recent first. Clamped at zero from below.
pub fn predict_params(model: &TrendModel, last3_beta: [f64; 3], last3_gamma: [f64; 3]) -> RateParams {
    let beta = apply_coefficients(&model.alpha, &last3_beta).max(0.0);
    let gamma = apply_coefficients(&model.omega, &last3_gamma).max(0.0);
    RateParams { beta, gamma }
}

fn apply_coefficients(coef: &[f64; 4], lags: &[f64; 3]) -> f64 {
    coef[0] + coef[1] * lags[0] + coef[2] * lags[1] + coef[3] * lags[2]
}

/// Map level/velocity/acceleration coefficients to AR(3) coefficients.
///
/// The model `x_t = t0 + t1 x_{t-1} + t2 v_{t-1} + t3 a_{t-1}` with
/// `v_t = x_t - x_{t-1}` and `a_t = v_t - v_{t-1}` expands to an AR(3) with
/// `a0 = t0`, `a1 = t1 + t2 + t3`, `a2 = -t2 - 2 t3`, `a3 = t3`.
pub fn theta_to_alpha(theta: [f64; 4]) -> [f64; 4] {
    [
        theta[0],
        theta[1] + theta[2] + theta[3],
        -theta[2] - 2.0 * theta[3],
        theta[3],
    ]
}

/// Forecast of weekly new infections over the whole state trajectory.
#[derive(Debug, Clone)]
pub struct TfvSirForecast {
    /// Predicted new infections per forecast week.
    pub weekly_cases: Vec<f64>,
    /// State at the end of each forecast week.
    pub weekly_states: Vec<SirState>,
    /// Rates used for each forecast week.
    pub weekly_rates: Vec<RateParams>,
}

/// Trend-following forecast: extrapolate next week's rates with the AR
/// model, run seven daily steps, and repeat with the predicted rates pushed
/// onto the lag window.
///
/// `state` is the state at the end of the last observed week and
/// `weekly_history` the fitted weekly rates (at daily-step scale) up to it;
/// at least three are required.
pub fn tfvsir_forecast(
    state: &SirState,
    weekly_history: &[WeeklyParams],
    model: &TrendModel,
    horizon: Horizon,
) -> Result<TfvSirForecast, SirError> {
    assert!(
        weekly_history.len() >= 3,
        "tf-v-SIR needs at least three weekly parameter pairs"
    );
    let k = weekly_history.len();
    let mut beta_lags = [
        weekly_history[k - 1].beta,
        weekly_history[k - 2].beta,
        weekly_history[k - 3].beta,
    ];
    let mut gamma_lags = [
        weekly_history[k - 1].gamma,
        weekly_history[k - 2].gamma,
        weekly_history[k - 3].gamma,
    ];

    let mut cur = *state;
    let mut out = TfvSirForecast {
        weekly_cases: Vec::with_capacity(horizon.weeks() as usize),
        weekly_states: Vec::with_capacity(horizon.weeks() as usize),
        weekly_rates: Vec::with_capacity(horizon.weeks() as usize),
    };
    for _ in horizon.steps() {
        let rates = predict_params(model, beta_lags, gamma_lags);
        let week_start = cur;
        for _ in 0..7 {
            cur = step(&cur, &rates)?;
        }
        out.weekly_cases.push(new_infections(&week_start, &cur));
        out.weekly_states.push(cur);
        out.weekly_rates.push(rates);
        beta_lags = [rates.beta, beta_lags[0], beta_lags[1]];
        gamma_lags = [rates.gamma, gamma_lags[0], gamma_lags[1]];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{fit_weekly_series, FitConfig};
    use crate::sir::simulate;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn weekly(betas: &[f64], gammas: &[f64]) -> Vec<WeeklyParams> {
        betas
            .iter()
            .zip(gammas)
            .enumerate()
            .map(|(week_index, (b, g))| WeeklyParams {
                week_index,
                beta: *b,
                gamma: *g,
                residual: 0.0,
                clamped: false,
            })
            .collect()
    }

    #[test]
    fn exact_ar1_history_is_recovered() {
        let mut b = vec![0.5];
        for _ in 0..19 {
            let last = *b.last().unwrap();
            b.push(0.01 + 0.9 * last);
        }
        let g = b.clone();
        let model = fit_trend(&weekly(&b, &g));
        assert_eq!(model.beta_fit, TrendFit::Ar1);
        assert!((model.alpha[0] - 0.01).abs() < 1e-9, "alpha {:?}", model.alpha);
        assert!((model.alpha[1] - 0.9).abs() < 1e-9);
        assert_eq!(model.alpha[2], 0.0);
        assert_eq!(model.alpha[3], 0.0);
        assert!(model.sigma_beta2 < 1e-18);
    }

    #[test]
    fn constant_history_falls_back_to_persistence() {
        let b = vec![0.3; 10];
        let model = fit_trend(&weekly(&b, &b));
        assert_eq!(model.beta_fit, TrendFit::Persistence);
        assert_eq!(model.gamma_fit, TrendFit::Persistence);
        assert_eq!(model.alpha, PERSISTENCE);
        let p = predict_params(&model, [0.3, 0.3, 0.3], [0.3, 0.3, 0.3]);
        assert_eq!(p.beta, 0.3);
    }

    #[test]
    fn short_history_falls_back_to_persistence() {
        let b = vec![0.3, 0.25, 0.2, 0.31];
        let model = fit_trend(&weekly(&b, &b));
        assert_eq!(model.beta_fit, TrendFit::Persistence);
    }

    /// Generate an AR(3) series with Gaussian-ish noise and return it with
    /// the true coefficients.
    fn synthetic_ar3(seed: u64, n: usize) -> (Vec<f64>, [f64; 4]) {
        let truth = [0.02, 0.6, 0.25, 0.05];
        let mut rng = StdRng::seed_from_u64(seed);
        let mut v = vec![0.4, 0.38, 0.41];
        for _ in 3..n {
            let k = v.len();
            let mean =
                truth[0] + truth[1] * v[k - 1] + truth[2] * v[k - 2] + truth[3] * v[k - 3];
            let noise: f64 = rng.random_range(-1.0..1.0) * 0.01 * 1.732;
            v.push(mean + noise);
        }
        (v, truth)
    }

    #[test]
    fn noisy_ar3_recovery_within_standard_errors() {
        let (series, truth) = synthetic_ar3(11, 200);
        let model = fit_trend(&weekly(&series, &series));
        assert_eq!(model.beta_fit, TrendFit::Ar3);

        // Independent standard errors from the normal equations:
        // var(coef) = sigma^2 (X^T X)^{-1}.
        let rows = series.len() - 3;
        let mut x = DMatrix::zeros(rows, 4);
        let mut y = DVector::zeros(rows);
        for r in 0..rows {
            let t = r + 3;
            x[(r, 0)] = 1.0;
            x[(r, 1)] = series[t - 1];
            x[(r, 2)] = series[t - 2];
            x[(r, 3)] = series[t - 3];
            y[r] = series[t];
        }
        let xtx = x.transpose() * &x;
        let inv = xtx.try_inverse().unwrap();
        for k in 0..4 {
            let se = (model.sigma_beta2 * inv[(k, k)]).sqrt();
            assert!(
                (model.alpha[k] - truth[k]).abs() <= 3.0 * se,
                "coef {k}: {} vs {} (se {se})",
                model.alpha[k],
                truth[k]
            );
        }

        // The fitted model applied to a held-out lag triple stays within two
        // residual standard deviations of the generating mean.
        let lags = [0.45, 0.42, 0.40];
        let predicted = apply_coefficients(&model.alpha, &lags);
        let truth_mean = truth[0] + truth[1] * lags[0] + truth[2] * lags[1] + truth[3] * lags[2];
        assert!((predicted - truth_mean).abs() <= 2.0 * model.sigma_beta2.sqrt());
    }

    #[test]
    fn persistence_prediction_repeats_last_value() {
        let model = TrendModel::persistence();
        let p = predict_params(&model, [0.3, 0.25, 0.2], [0.2, 0.2, 0.2]);
        assert_eq!(p.beta, 0.3);
        assert_eq!(p.gamma, 0.2);
    }

    #[test]
    fn prediction_is_clamped_at_zero() {
        let model = TrendModel {
            alpha: [-1.0, 0.0, 0.0, 0.0],
            omega: PERSISTENCE,
            sigma_beta2: 0.0,
            sigma_gamma2: 0.0,
            beta_fit: TrendFit::Ar3,
            gamma_fit: TrendFit::Persistence,
        };
        let p = predict_params(&model, [0.1, 0.1, 0.1], [0.2, 0.2, 0.2]);
        assert_eq!(p.beta, 0.0);
    }

    #[test]
    fn theta_mapping_examples() {
        assert_eq!(theta_to_alpha([0.0, 1.0, 0.0, 0.0]), [0.0, 1.0, 0.0, 0.0]);
        // Expanding v_{t-1} = x_{t-1} - x_{t-2} by hand gives 2 x_{t-1} - x_{t-2}.
        assert_eq!(theta_to_alpha([0.0, 1.0, 1.0, 0.0]), [0.0, 2.0, -1.0, 0.0]);
        assert_eq!(theta_to_alpha([0.0, 1.0, 0.0, 1.0]), [0.0, 2.0, -2.0, 1.0]);
    }

    fn theta_prediction(theta: &[f64; 4], lags: &[f64; 3]) -> f64 {
        let v1 = lags[0] - lags[1];
        let v2 = lags[1] - lags[2];
        let a1 = v1 - v2;
        theta[0] + theta[1] * lags[0] + theta[2] * v1 + theta[3] * a1
    }

    #[test]
    fn velocity_form_matches_mapped_ar_form() {
        let theta = [0.0, 1.0, 1.0, 0.0];
        let alpha = theta_to_alpha(theta);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let lags = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let a = theta_prediction(&theta, &lags);
            let b = apply_coefficients(&alpha, &lags);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn theta_alpha_equivalence(
            theta in prop::array::uniform4(-2.0f64..2.0),
            lags in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let alpha = theta_to_alpha(theta);
            let a = theta_prediction(&theta, &lags);
            let b = apply_coefficients(&alpha, &lags);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn ols_beats_random_perturbations() {
        let (series, _) = synthetic_ar3(5, 120);
        let model = fit_trend(&weekly(&series, &series));
        let rss = |coef: &[f64; 4]| -> f64 {
            (3..series.len())
                .map(|t| {
                    let lags = [series[t - 1], series[t - 2], series[t - 3]];
                    (series[t] - apply_coefficients(coef, &lags)).powi(2)
                })
                .sum()
        };
        let fitted = rss(&model.alpha);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let mut perturbed = model.alpha;
            for c in &mut perturbed {
                *c += rng.random_range(-0.05..0.05);
            }
            assert!(fitted <= rss(&perturbed) + 1e-12);
        }
    }

    #[test]
    fn persistence_forecast_is_constant_parameter_sir() {
        let initial = SirState::new(900_000.0, 80_000.0, 20_000.0, 1_000_000.0).unwrap();
        let history = weekly(&[0.4, 0.4, 0.4], &[0.2, 0.2, 0.2]);
        let model = TrendModel::persistence();
        let fc = tfvsir_forecast(&initial, &history, &model, Horizon::new(1).unwrap()).unwrap();
        let manual = simulate(&initial, &vec![RateParams::new(0.4, 0.2).unwrap(); 7]).unwrap();
        let expected = new_infections(&initial, manual.last().unwrap());
        assert_eq!(fc.weekly_cases[0], expected);
    }

    #[test]
    fn forecast_shape_and_sign() {
        let initial = SirState::new(900_000.0, 80_000.0, 20_000.0, 1_000_000.0).unwrap();
        let history = weekly(&[0.5, 0.45, 0.4], &[0.2, 0.2, 0.2]);
        let model = fit_trend(&history);
        let fc = tfvsir_forecast(&initial, &history, &model, Horizon::new(4).unwrap()).unwrap();
        assert_eq!(fc.weekly_cases.len(), 4);
        assert!(fc.weekly_cases.iter().all(|c| *c >= 0.0));
    }

    #[test]
    fn forecast_chaining_is_prefix_consistent() {
        let initial = SirState::new(900_000.0, 80_000.0, 20_000.0, 1_000_000.0).unwrap();
        let b: Vec<f64> = (0..10).map(|k| 0.6 - 0.02 * k as f64).collect();
        let g = vec![0.2; 10];
        let history = weekly(&b, &g);
        let model = fit_trend(&history);
        let short = tfvsir_forecast(&initial, &history, &model, Horizon::new(2).unwrap()).unwrap();
        let long = tfvsir_forecast(&initial, &history, &model, Horizon::new(4).unwrap()).unwrap();
        assert_eq!(short.weekly_cases, long.weekly_cases[..2].to_vec());
    }

    #[test]
    fn rolling_trend_forecasts_beat_fixed_fit_on_decaying_beta() {
        // An epidemic whose transmission rate decays linearly week over week.
        // One-week-ahead trend-following forecasts track it closely; a single
        // (beta, gamma) fitted to the whole series cannot.
        let n = 1_000_000.0;
        let initial = SirState::new(950_000.0, 50_000.0, 0.0, n).unwrap();
        let weeks = 20;
        let schedule: Vec<f64> = (0..weeks).map(|w| 0.65 - 0.02 * w as f64).collect();
        let mut seq = Vec::new();
        for b in &schedule {
            for _ in 0..7 {
                seq.push(RateParams::new(*b, 0.25).unwrap());
            }
        }
        let mut states = vec![initial];
        states.extend(simulate(&initial, &seq).unwrap());

        let actual_week = |w: usize| new_infections(&states[w * 7], &states[(w + 1) * 7]);

        let mut trend_apes = Vec::new();
        for origin in 5..weeks {
            let train = &states[..=origin * 7];
            let weekly = fit_weekly_series(train, &FitConfig::default()).unwrap();
            let model = fit_trend(&weekly);
            let fc =
                tfvsir_forecast(train.last().unwrap(), &weekly, &model, Horizon::new(1).unwrap())
                    .unwrap();
            let actual = actual_week(origin);
            trend_apes.push(100.0 * (actual - fc.weekly_cases[0]).abs() / actual);
        }
        let trend_mape = trend_apes.iter().sum::<f64>() / trend_apes.len() as f64;

        // Fixed-parameter comparator fitted to the full series.
        let fixed = crate::fit::fit_window(&states, &FitConfig::default()).unwrap();
        let mut fixed_apes = Vec::new();
        for origin in 5..weeks {
            let start = states[origin * 7];
            let traj = simulate(&start, &vec![fixed.params; 7]).unwrap();
            let predicted = new_infections(&start, traj.last().unwrap());
            let actual = actual_week(origin);
            fixed_apes.push(100.0 * (actual - predicted).abs() / actual);
        }
        let fixed_mape = fixed_apes.iter().sum::<f64>() / fixed_apes.len() as f64;

        assert!(trend_mape < 5.0, "trend MAPE {trend_mape}");
        assert!(fixed_mape > trend_mape, "fixed {fixed_mape} vs trend {trend_mape}");
    }
}
