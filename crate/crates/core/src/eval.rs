//! Rolling-origin evaluation scored by MAPE.
//!
//! Every origin is a Sunday; models are refit on the data strictly before it
//! and score their 1- to 4-week forecasts against the reported weekly
//! totals. All models see the same per-origin view, rebuilt from the raw
//! inputs so no derived quantity can leak information from at or after the
//! origin.

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, RegionRaw, RegionView};
use crate::fit::FitConfig;
use crate::forecast::{mixture_forecast, prepare, slow_forecast, ForecastError};
use crate::pgm::PgmConfig;
use crate::trend::{fit_trend, tfvsir_forecast};
use crate::Horizon;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("actual and predicted lengths differ ({actual} vs {predicted})")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("MAPE undefined: every actual value is zero")]
    AllZeroActual,
    #[error("origin {origin} is not a Sunday")]
    BadOrigin { origin: NaiveDate },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// MAPE outcome; weeks with a zero actual are excluded and counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub percent: f64,
    pub n_used: usize,
    pub excluded_zero_actual: usize,
}

/// Mean absolute percentage error, skipping zero-actual entries.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<Mape, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    let mut total = 0.0;
    let mut used = 0;
    let mut excluded = 0;
    for (a, p) in actual.iter().zip(predicted) {
        if *a > 0.0 {
            total += 100.0 * (a - p).abs() / a;
            used += 1;
        } else {
            excluded += 1;
        }
    }
    if used == 0 {
        return Err(EvalError::AllZeroActual);
    }
    Ok(Mape {
        percent: total / used as f64,
        n_used: used,
        excluded_zero_actual: excluded,
    })
}

/// A forecasting model under rolling evaluation. Implementations must use
/// only the training view they are given.
pub trait WeekAheadModel {
    fn name(&self) -> &str;
    /// Point forecasts for 1..=horizon weeks past the end of `train`.
    fn forecast(&self, train: &RegionView, horizon: Horizon) -> Result<Vec<f64>, ForecastError>;
}

/// Baseline: repeat the last observed week's total.
pub struct SlowModel;

impl WeekAheadModel for SlowModel {
    fn name(&self) -> &str {
        "SLOW"
    }

    fn forecast(&self, train: &RegionView, horizon: Horizon) -> Result<Vec<f64>, ForecastError> {
        let (_, totals) = weekly_case_totals(train)?;
        let last = *totals.last().ok_or(ForecastError::NoCompleteWeeks)?;
        Ok(slow_forecast(last, horizon))
    }
}

/// SIR with AR(3)-extrapolated weekly rates, no policy gating.
pub struct TfvSirModel {
    pub fit_config: FitConfig,
}

impl WeekAheadModel for TfvSirModel {
    fn name(&self) -> &str {
        "tf-v-SIR"
    }

    fn forecast(&self, train: &RegionView, horizon: Horizon) -> Result<Vec<f64>, ForecastError> {
        let snapshot = prepare(train, &self.fit_config)?;
        if snapshot.weeks() < crate::forecast::MIN_FORECAST_WEEKS {
            return Err(ForecastError::ColdStart {
                weeks: snapshot.weeks(),
                needed: crate::forecast::MIN_FORECAST_WEEKS,
            });
        }
        let trend = fit_trend(&snapshot.weekly_params);
        let fc = tfvsir_forecast(
            snapshot.weekly_states.last().expect("states"),
            &snapshot.weekly_params,
            &trend,
            horizon,
        )?;
        Ok(fc.weekly_cases)
    }
}

/// The full mixture-of-experts forecaster.
pub struct SimlrModel {
    pub fit_config: FitConfig,
    pub pgm: PgmConfig,
}

impl WeekAheadModel for SimlrModel {
    fn name(&self) -> &str {
        "SIMLR"
    }

    fn forecast(&self, train: &RegionView, horizon: Horizon) -> Result<Vec<f64>, ForecastError> {
        let snapshot = prepare(train, &self.fit_config)?;
        let trend = fit_trend(&snapshot.weekly_params);
        let forecasts = mixture_forecast(&snapshot, &self.pgm, &trend, horizon)?;
        Ok(forecasts.into_iter().map(|f| f.point).collect())
    }
}

/// Weekly (Sunday-to-Saturday) reported totals of a processed view.
pub fn weekly_case_totals(
    view: &RegionView,
) -> Result<(Vec<NaiveDate>, Vec<f64>), ForecastError> {
    let start = crate::data::first_sunday(&view.daily.dates).ok_or(ForecastError::NoCompleteWeeks)?;
    let weeks = (view.daily.dates.len() - start) / 7;
    if weeks == 0 {
        return Err(ForecastError::NoCompleteWeeks);
    }
    let mut starts = Vec::with_capacity(weeks);
    let mut totals = Vec::with_capacity(weeks);
    for k in 0..weeks {
        let lo = start + k * 7;
        starts.push(view.daily.dates[lo]);
        totals.push(view.daily.new_infections[lo..lo + 7].iter().sum());
    }
    Ok((starts, totals))
}

/// One scored forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginScore {
    pub origin: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
    /// Absolute percentage error; `None` for zero-actual weeks.
    pub ape: Option<f64>,
}

/// All scores for one model at one horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: String,
    pub horizon: u8,
    pub scores: Vec<OriginScore>,
    pub mape: f64,
    pub n_origins: usize,
    pub excluded_zero_actual: usize,
}

/// A skipped (origin, model, horizon) triple and why. One record per lost
/// score, so scored rows plus skip records always total
/// `origins x models x 4`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipRecord {
    pub origin: NaiveDate,
    pub model: String,
    pub horizon: u8,
    pub reason: String,
}

/// Full rolling-origin report for one region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub region: String,
    pub cells: Vec<EvalCell>,
    pub skips: Vec<SkipRecord>,
}

impl EvalReport {
    pub fn cell(&self, model: &str, horizon: u8) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.horizon == horizon)
    }
}

/// Run the rolling evaluation: for each origin, rebuild the view from raw
/// data strictly before it, forecast 1..=4 weeks with every model, and score
/// against the observed weekly totals. Origins a model cannot serve are
/// skipped and recorded.
pub fn rolling_evaluate(
    raw: &RegionRaw,
    models: &[&dyn WeekAheadModel],
    origins: &[NaiveDate],
) -> Result<EvalReport, EvalError> {
    for origin in origins {
        if origin.weekday() != Weekday::Sun {
            return Err(EvalError::BadOrigin { origin: *origin });
        }
    }
    let full = raw.view()?;
    let (week_starts, totals) = weekly_case_totals(&full)?;
    let actual_for = |week_start: NaiveDate| -> Option<f64> {
        week_starts
            .iter()
            .position(|d| *d == week_start)
            .map(|k| totals[k])
    };

    let horizon = Horizon::new(Horizon::MAX).expect("max horizon");
    let mut skips = Vec::new();
    // results[model][horizon-1] -> scores
    let mut scores: Vec<Vec<Vec<OriginScore>>> =
        vec![vec![Vec::new(); Horizon::MAX as usize]; models.len()];

    for origin in origins {
        let train = match raw.view_before(*origin) {
            Ok(view) => view,
            Err(err) => {
                let reason = format!("training data unavailable: {err}");
                log::warn!("skipping origin {origin}: {reason}");
                for model in models {
                    for h in horizon.steps() {
                        skips.push(SkipRecord {
                            origin: *origin,
                            model: model.name().to_string(),
                            horizon: h,
                            reason: reason.clone(),
                        });
                    }
                }
                continue;
            }
        };
        for (m, model) in models.iter().enumerate() {
            let predicted = match model.forecast(&train, horizon) {
                Ok(p) => p,
                Err(err) => {
                    log::warn!("skipping origin {origin} for {}: {err}", model.name());
                    for h in horizon.steps() {
                        skips.push(SkipRecord {
                            origin: *origin,
                            model: model.name().to_string(),
                            horizon: h,
                            reason: err.to_string(),
                        });
                    }
                    continue;
                }
            };
            for h in horizon.steps() {
                let target_week = *origin + chrono::Duration::weeks(h as i64 - 1);
                let Some(actual) = actual_for(target_week) else {
                    skips.push(SkipRecord {
                        origin: *origin,
                        model: model.name().to_string(),
                        horizon: h,
                        reason: format!("no reported total for week {target_week}"),
                    });
                    continue;
                };
                let predicted_h = predicted[h as usize - 1];
                let ape = (actual > 0.0).then(|| 100.0 * (actual - predicted_h).abs() / actual);
                scores[m][h as usize - 1].push(OriginScore {
                    origin: *origin,
                    actual,
                    predicted: predicted_h,
                    ape,
                });
            }
        }
    }

    let mut cells = Vec::new();
    for (m, model) in models.iter().enumerate() {
        for h in horizon.steps() {
            let cell_scores = std::mem::take(&mut scores[m][h as usize - 1]);
            let used: Vec<f64> = cell_scores.iter().filter_map(|s| s.ape).collect();
            let excluded = cell_scores.len() - used.len();
            let mape = if used.is_empty() {
                f64::NAN
            } else {
                used.iter().sum::<f64>() / used.len() as f64
            };
            cells.push(EvalCell {
                model: model.name().to_string(),
                horizon: h,
                n_origins: cell_scores.len(),
                excluded_zero_actual: excluded,
                scores: cell_scores,
                mape,
            });
        }
    }

    Ok(EvalReport {
        region: raw.region.clone(),
        cells,
        skips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PolicyDaily, RawSeries, RegionRaw};

    fn sunday0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 7, 26).unwrap()
    }

    /// Region whose weekly totals alternate 100 / 200 after two quiet weeks.
    /// Daily values keep enough spread that the outlier clamp never fires.
    pub(crate) fn alternating_region(weeks: usize) -> RegionRaw {
        let low = [2i64, 8, 14, 20, 26, 18, 12]; // sums to 100
        let high = [12i64, 20, 28, 40, 44, 32, 24]; // sums to 200
        let mut daily = Vec::new();
        daily.extend_from_slice(&low);
        for w in 1..weeks {
            if w % 2 == 1 {
                daily.extend_from_slice(&high);
            } else {
                daily.extend_from_slice(&low);
            }
        }
        raw_from_daily("alternating", &daily)
    }

    /// Region with a constant weekly total.
    pub(crate) fn constant_region(weeks: usize) -> RegionRaw {
        let week = [2i64, 8, 14, 20, 26, 18, 12];
        let mut daily = Vec::new();
        for _ in 0..weeks {
            daily.extend_from_slice(&week);
        }
        raw_from_daily("constant", &daily)
    }

    pub(crate) fn raw_from_daily(region: &str, daily: &[i64]) -> RegionRaw {
        // Raw dates start the Saturday before so the differenced series
        // starts on a Sunday.
        let start = sunday0() - chrono::Duration::days(1);
        let mut dates = vec![start];
        let mut cumulative = vec![0i64];
        for (d, v) in daily.iter().enumerate() {
            dates.push(start + chrono::Duration::days(d as i64 + 1));
            cumulative.push(cumulative[d] + v);
        }
        let deaths = vec![0i64; cumulative.len()];
        let policy_dates = dates[1..].to_vec();
        let len = policy_dates.len();
        RegionRaw {
            region: region.to_string(),
            population: 1_000_000.0,
            cases: RawSeries {
                region: region.to_string(),
                dates,
                cumulative_cases: cumulative,
                cumulative_deaths: deaths,
            },
            policy: PolicyDaily {
                region: region.to_string(),
                dates: policy_dates,
                workplace: vec![1; len],
                stay_home: vec![0; len],
                cancel_events: vec![0; len],
                filled_cells: 0,
            },
        }
    }

    #[test]
    fn mape_examples() {
        let m = mape(&[100.0, 200.0], &[100.0, 200.0]).unwrap();
        assert_eq!(m.percent, 0.0);
        let m = mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap();
        assert!((m.percent - 10.0).abs() < 1e-12);
        let m = mape(&[100.0], &[0.0]).unwrap();
        assert_eq!(m.percent, 100.0);
    }

    #[test]
    fn mape_excludes_zero_actual_weeks() {
        let m = mape(&[0.0, 100.0], &[5.0, 110.0]).unwrap();
        assert_eq!(m.excluded_zero_actual, 1);
        assert_eq!(m.n_used, 1);
        assert!((m.percent - 10.0).abs() < 1e-12);
        assert!(matches!(
            mape(&[0.0, 0.0], &[1.0, 2.0]),
            Err(EvalError::AllZeroActual)
        ));
        assert!(matches!(
            mape(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn alternating_fixture_survives_preprocessing() {
        let raw = alternating_region(12);
        let view = raw.view().unwrap();
        assert_eq!(view.daily.infections_clamped, 0);
        assert_eq!(view.daily.infections_filled, 0);
        let (_, totals) = weekly_case_totals(&view).unwrap();
        assert_eq!(totals.len(), 12);
        for (w, total) in totals.iter().enumerate() {
            let expected = if w == 0 || w % 2 == 0 { 100.0 } else { 200.0 };
            assert_eq!(*total, expected, "week {w}");
        }
    }

    #[test]
    fn slow_scores_zero_on_constant_series() {
        let raw = constant_region(12);
        let origins: Vec<NaiveDate> = (6..9)
            .map(|w| sunday0() + chrono::Duration::weeks(w))
            .collect();
        let report = rolling_evaluate(&raw, &[&SlowModel], &origins).unwrap();
        for h in 1..=4u8 {
            let cell = report.cell("SLOW", h).unwrap();
            assert_eq!(cell.mape, 0.0, "horizon {h}");
            assert_eq!(cell.n_origins, 3);
        }
        assert!(report.skips.is_empty());
    }

    #[test]
    fn slow_scores_seventy_five_percent_on_alternation() {
        let raw = alternating_region(16);
        // Even count of origins so the 50% / 100% pattern averages exactly.
        let origins: Vec<NaiveDate> = (6..14)
            .map(|w| sunday0() + chrono::Duration::weeks(w))
            .collect();
        let report = rolling_evaluate(&raw, &[&SlowModel], &origins).unwrap();
        let cell = report.cell("SLOW", 1).unwrap();
        assert!((cell.mape - 75.0).abs() < 1e-9, "mape {}", cell.mape);
    }

    #[test]
    fn non_sunday_origin_is_rejected() {
        let raw = constant_region(8);
        let monday = sunday0() + chrono::Duration::days(1);
        assert!(matches!(
            rolling_evaluate(&raw, &[&SlowModel], &[monday]),
            Err(EvalError::BadOrigin { .. })
        ));
    }

    #[test]
    fn short_history_origin_is_skipped_not_fatal() {
        let raw = constant_region(12);
        let early = sunday0() + chrono::Duration::weeks(1);
        let late = sunday0() + chrono::Duration::weeks(7);
        let report = rolling_evaluate(
            &raw,
            &[&TfvSirModel { fit_config: FitConfig::default() }],
            &[early, late],
        )
        .unwrap();
        assert!(!report.skips.is_empty());
        let cell = report.cell("tf-v-SIR", 1).unwrap();
        assert_eq!(cell.n_origins, 1);
    }

    #[test]
    fn forecasts_ignore_data_at_or_after_the_origin() {
        let raw = alternating_region(16);
        let origin = sunday0() + chrono::Duration::weeks(8);
        let model = TfvSirModel {
            fit_config: FitConfig::default(),
        };
        let horizon = Horizon::new(4).unwrap();
        let baseline = model
            .forecast(&raw.view_before(origin).unwrap(), horizon)
            .unwrap();

        // Perturb a point after the origin and re-run end to end.
        let mut tampered = raw.clone();
        let idx = tampered.cases.dates.len() - 3;
        tampered.cases.cumulative_cases[idx] += 5000;
        let perturbed = model
            .forecast(&tampered.view_before(origin).unwrap(), horizon)
            .unwrap();
        assert_eq!(baseline, perturbed);
    }
}
