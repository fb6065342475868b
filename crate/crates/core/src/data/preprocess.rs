//! Cleaning of daily count series.
//!
//! Applied in order to the first-differenced cumulative counts:
//!
//! 1. negative diffs become missing (reporting corrections);
//! 2. a run of `k` missing days followed by a reported day splits that day's
//!    count evenly across all `k + 1` days (a trailing missing run with no
//!    reported day after it becomes zeros);
//! 3. each day from index 10 on is clamped to `mean + 4 * std` of the
//!    previous 10 working values, so earlier fills and clamps feed later
//!    windows and the whole cleaning pass is a fixed point of itself.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, RawSeries};

/// Window length for the outlier clamp.
const OUTLIER_WINDOW: usize = 10;

/// Cleaned daily series; one value per day for both counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub region: String,
    /// One date per value; the first cumulative date is consumed by the
    /// differencing.
    pub dates: Vec<NaiveDate>,
    pub new_infections: Vec<f64>,
    pub new_deaths: Vec<f64>,
    pub infections_filled: usize,
    pub infections_clamped: usize,
    pub deaths_filled: usize,
    pub deaths_clamped: usize,
}

/// Outcome of cleaning one daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanResult {
    pub values: Vec<f64>,
    /// Days whose value was reconstructed by the missing-run split.
    pub filled: usize,
    /// Days clamped by the outlier rule.
    pub clamped: usize,
}

/// Steps (2)-(4) on an already-differenced daily series.
pub fn clean_daily(diffs: &[f64]) -> CleanResult {
    // Step 2: negatives are missing.
    let mut values: Vec<Option<f64>> = diffs
        .iter()
        .map(|v| if *v < 0.0 { None } else { Some(*v) })
        .collect();

    // Step 3: split a reported day across the preceding missing run.
    let mut filled = 0;
    let mut run_start: Option<usize> = None;
    for d in 0..values.len() {
        match values[d] {
            None => {
                if run_start.is_none() {
                    run_start = Some(d);
                }
            }
            Some(v) => {
                if let Some(start) = run_start.take() {
                    let share = v / (d - start + 1) as f64;
                    for slot in values.iter_mut().take(d + 1).skip(start) {
                        *slot = Some(share);
                    }
                    filled += d - start;
                }
            }
        }
    }
    // Trailing missing run with nothing to borrow from.
    if let Some(start) = run_start {
        for slot in values.iter_mut().skip(start) {
            *slot = Some(0.0);
        }
        filled += values.len() - start;
    }
    let mut working: Vec<f64> = values.into_iter().map(|v| v.unwrap()).collect();

    // Step 4: clamp against the trailing window of working values. An
    // all-zero window carries no outlier statistics and would pin the first
    // report after a quiet stretch (epidemic onset included) to zero
    // forever, so those days pass through unclamped.
    let mut clamped = 0;
    for d in OUTLIER_WINDOW..working.len() {
        let window = &working[d - OUTLIER_WINDOW..d];
        if window.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mean = window.iter().sum::<f64>() / OUTLIER_WINDOW as f64;
        let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / OUTLIER_WINDOW as f64;
        let limit = mean + 4.0 * var.sqrt();
        if working[d] > limit {
            working[d] = limit;
            clamped += 1;
        }
    }

    CleanResult {
        values: working,
        filled,
        clamped,
    }
}

/// First-difference the cumulative counts and clean both daily series.
pub fn preprocess(raw: &RawSeries) -> Result<DailySeries, DataError> {
    let len = raw.dates.len();
    if len < OUTLIER_WINDOW + 2 {
        return Err(DataError::TooShort {
            len: len.saturating_sub(1),
            min: OUTLIER_WINDOW + 1,
        });
    }
    if raw.cumulative_cases.len() != len || raw.cumulative_deaths.len() != len {
        return Err(DataError::MisalignedSeries {
            problem: "cumulative series and dates differ in length".to_string(),
        });
    }

    let diff = |series: &[i64]| -> Vec<f64> {
        series.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
    };
    let infections = clean_daily(&diff(&raw.cumulative_cases));
    let deaths = clean_daily(&diff(&raw.cumulative_deaths));

    Ok(DailySeries {
        region: raw.region.clone(),
        dates: raw.dates[1..].to_vec(),
        new_infections: infections.values,
        new_deaths: deaths.values,
        infections_filled: infections.filled,
        infections_clamped: infections.clamped,
        deaths_filled: deaths.filled,
        deaths_clamped: deaths.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn negative_diff_becomes_split() {
        // cumulative [100, 110, 105, 130] -> diffs [10, -5, 25]
        let out = clean_daily(&[10.0, -5.0, 25.0]);
        assert_eq!(out.values, vec![10.0, 12.5, 12.5]);
        assert_eq!(out.filled, 1);
    }

    #[test]
    fn missing_run_splits_across_all_days() {
        let out = clean_daily(&[8.0, -1.0, -2.0, 30.0]);
        assert_eq!(out.values, vec![8.0, 10.0, 10.0, 10.0]);
        assert_eq!(out.filled, 2);
    }

    #[test]
    fn leading_and_trailing_runs() {
        let out = clean_daily(&[-3.0, 10.0, 4.0, -1.0]);
        assert_eq!(out.values, vec![5.0, 5.0, 4.0, 0.0]);
        assert_eq!(out.filled, 2);
    }

    #[test]
    fn constant_series_is_untouched_at_sigma_zero() {
        let out = clean_daily(&vec![50.0; 30]);
        assert_eq!(out.values, vec![50.0; 30]);
        assert_eq!(out.clamped, 0);
    }

    #[test]
    fn spike_is_clamped_to_window_mean() {
        // Ten days of 10 (mean 10, sigma 0), then 500 -> clamped to 10.
        let mut series = vec![10.0; 10];
        series.push(500.0);
        let out = clean_daily(&series);
        assert_eq!(out.values[10], 10.0);
        assert_eq!(out.clamped, 1);
    }

    #[test]
    fn clamp_uses_mean_plus_four_sigma() {
        // Window alternating 0/20: mean 10, population sigma 10 -> limit 50.
        let mut series: Vec<f64> = (0..10).map(|d| if d % 2 == 0 { 0.0 } else { 20.0 }).collect();
        series.push(49.0); // under the limit, kept
        series.push(200.0); // over the limit of its own window, clamped
        let out = clean_daily(&series);
        assert_eq!(out.values[10], 49.0);
        let window: Vec<f64> = out.values[1..11].to_vec();
        let mean = window.iter().sum::<f64>() / 10.0;
        let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0;
        assert!((out.values[11] - (mean + 4.0 * var.sqrt())).abs() < 1e-12);
        assert_eq!(out.clamped, 1);
    }

    #[test]
    fn onset_after_quiet_stretch_survives() {
        // Leading zeros carry no statistics; the first report must pass
        // unclamped, and the ramp must keep growing rather than being pinned
        // to the zero window forever.
        let mut series = vec![0.0; 15];
        series.extend([3.0, 5.0, 9.0, 14.0]);
        let out = clean_daily(&series);
        assert_eq!(out.values[15], 3.0);
        assert!(out.values[16] > 0.0);
        assert!(out.values[18] > out.values[15]);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let raw = RawSeries {
            region: "x".into(),
            dates: (0..5)
                .map(|d| NaiveDate::from_ymd_opt(2020, 1, d + 1).unwrap())
                .collect(),
            cumulative_cases: vec![0, 1, 2, 3, 4],
            cumulative_deaths: vec![0; 5],
        };
        assert!(matches!(preprocess(&raw), Err(DataError::TooShort { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Cleaning is idempotent on its own output.
        #[test]
        fn clean_daily_is_idempotent(diffs in prop::collection::vec(-50.0f64..500.0, 12..60)) {
            let once = clean_daily(&diffs);
            let twice = clean_daily(&once.values);
            prop_assert_eq!(&once.values, &twice.values);
            prop_assert_eq!(twice.filled, 0);
            prop_assert_eq!(twice.clamped, 0);
        }

        // Cleaned values are non-negative and finite.
        #[test]
        fn clean_daily_output_is_sane(diffs in prop::collection::vec(-100.0f64..1000.0, 1..80)) {
            let out = clean_daily(&diffs);
            prop_assert_eq!(out.values.len(), diffs.len());
            prop_assert!(out.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
