//! Data ingestion and preparation.
//!
//! Raw inputs are two cumulative case/death CSVs (wide layout: one row per
//! region, one column per day) and a policy-indicator CSV (long layout: one
//! row per region-date). Preparation first-differences the cumulative
//! counts, treats negative diffs as missing, fills missing runs from the
//! next reported day, clamps outliers against a trailing 10-day window, and
//! finally builds a daily SIR state series with 15-day cohort recovery.
//!
//! All file reads are offline; fetching the public CSVs is left to a
//! separate script.

mod ingest;
mod policy;
mod preprocess;

pub use ingest::{ingest_cases, ingest_cumulative};
pub use policy::{derive_policy_changes, ingest_policy, PolicyDaily, PolicyWeek};
pub use preprocess::{clean_daily, preprocess, CleanResult, DailySeries};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::sir::{SirError, SirState};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unknown region '{region}'")]
    UnknownRegion { region: String },
    #[error("schema mismatch: {problem}")]
    SchemaMismatch { problem: String },
    #[error("{context}: dates not strictly increasing around {a} / {b}")]
    NonMonotonicDates {
        context: &'static str,
        a: NaiveDate,
        b: NaiveDate,
    },
    #[error("{context}: gap between {a} and {b}")]
    DateGap {
        context: &'static str,
        a: NaiveDate,
        b: NaiveDate,
    },
    #[error("series of {len} days is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("misaligned series: {problem}")]
    MisalignedSeries { problem: String },
    #[error("population must be positive, got {value}")]
    BadPopulation { value: f64 },
    #[error(transparent)]
    Sir(#[from] SirError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cumulative reported counts for one region, daily and contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSeries {
    pub region: String,
    pub dates: Vec<NaiveDate>,
    pub cumulative_cases: Vec<i64>,
    pub cumulative_deaths: Vec<i64>,
}

/// Daily SIR series plus a count of days where reported deaths exceeded the
/// infected pool (the excess is dropped with this warning count).
#[derive(Debug, Clone)]
pub struct SirSeries {
    /// `states[0]` is the fully susceptible baseline before the first day;
    /// `states[d + 1]` is the state at the end of day `d`.
    pub states: Vec<SirState>,
    pub depleted_days: usize,
}

/// Days an infected person has to survive before counting as recovered.
pub const RECOVERY_DAYS: usize = 15;

/// Build the daily SIR series from cleaned new-infection and new-death
/// counts.
///
/// Everyone starts susceptible. Each day new infections move S -> I, deaths
/// move I -> R depleting the oldest infection cohorts first, and any cohort
/// infected [`RECOVERY_DAYS`] ago moves its survivors to R. Population is
/// conserved exactly because R is computed as N - S - I.
pub fn build_sir_series(
    new_infections: &[f64],
    new_deaths: &[f64],
    population: f64,
) -> Result<SirSeries, DataError> {
    if new_infections.len() != new_deaths.len() {
        return Err(DataError::MisalignedSeries {
            problem: format!(
                "{} infection days vs {} death days",
                new_infections.len(),
                new_deaths.len()
            ),
        });
    }
    if !(population.is_finite() && population > 0.0) {
        return Err(DataError::BadPopulation { value: population });
    }

    let mut states = Vec::with_capacity(new_infections.len() + 1);
    states.push(SirState::fully_susceptible(population)?);
    let mut s = population;
    let mut i = 0.0;
    let mut depleted_days = 0;
    // (infection day, persons still infected from that day's cohort)
    let mut cohorts: VecDeque<(usize, f64)> = VecDeque::new();

    for day in 0..new_infections.len() {
        let infections = new_infections[day].max(0.0).min(s);
        s -= infections;
        i += infections;
        if infections > 0.0 {
            cohorts.push_back((day, infections));
        }

        let mut removed = 0.0;
        let mut deaths = new_deaths[day].max(0.0);
        while deaths > 0.0 {
            match cohorts.front_mut() {
                Some(front) => {
                    let take = front.1.min(deaths);
                    front.1 -= take;
                    deaths -= take;
                    removed += take;
                    if front.1 <= 0.0 {
                        cohorts.pop_front();
                    }
                }
                None => {
                    depleted_days += 1;
                    break;
                }
            }
        }
        while let Some(front) = cohorts.front() {
            if day >= RECOVERY_DAYS && front.0 <= day - RECOVERY_DAYS {
                removed += front.1;
                cohorts.pop_front();
            } else {
                break;
            }
        }

        i = (i - removed).max(0.0);
        let r = population - s - i;
        states.push(SirState::new(s, i, r, population)?);
    }

    Ok(SirSeries {
        states,
        depleted_days,
    })
}

/// Raw inputs for one region, ready to be processed through any cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionRaw {
    pub region: String,
    pub population: f64,
    pub cases: RawSeries,
    pub policy: PolicyDaily,
}

/// Fully processed view of a region's data up to (excluding) a cutoff date.
#[derive(Debug, Clone)]
pub struct RegionView {
    pub region: String,
    pub population: f64,
    pub daily: DailySeries,
    /// One more entry than `daily.dates`; see [`SirSeries`].
    pub states: Vec<SirState>,
    pub policy_weeks: Vec<PolicyWeek>,
    pub depleted_days: usize,
}

impl RegionRaw {
    /// Process all available data.
    pub fn view(&self) -> Result<RegionView, DataError> {
        self.view_impl(None)
    }

    /// Process only data strictly before `cutoff`. Rolling evaluation uses
    /// this so every derived quantity (fills, clamps, cohorts, policy weeks)
    /// is recomputed from what was observable at the time.
    pub fn view_before(&self, cutoff: NaiveDate) -> Result<RegionView, DataError> {
        self.view_impl(Some(cutoff))
    }

    fn view_impl(&self, cutoff: Option<NaiveDate>) -> Result<RegionView, DataError> {
        let cases = match cutoff {
            Some(cut) => truncate_raw(&self.cases, cut),
            None => self.cases.clone(),
        };
        let daily = preprocess(&cases)?;
        let sir = build_sir_series(&daily.new_infections, &daily.new_deaths, self.population)?;
        let policy = match cutoff {
            Some(cut) => self.policy.truncated(cut),
            None => self.policy.clone(),
        };
        let policy_weeks = derive_policy_changes(&policy);
        Ok(RegionView {
            region: self.region.clone(),
            population: self.population,
            daily,
            states: sir.states,
            policy_weeks,
            depleted_days: sir.depleted_days,
        })
    }
}

fn truncate_raw(raw: &RawSeries, cutoff: NaiveDate) -> RawSeries {
    let keep = raw.dates.iter().take_while(|d| **d < cutoff).count();
    RawSeries {
        region: raw.region.clone(),
        dates: raw.dates[..keep].to_vec(),
        cumulative_cases: raw.cumulative_cases[..keep].to_vec(),
        cumulative_deaths: raw.cumulative_deaths[..keep].to_vec(),
    }
}

/// Index of the first Sunday in a contiguous daily date range.
pub(crate) fn first_sunday(dates: &[NaiveDate]) -> Option<usize> {
    dates.iter().position(|d| d.weekday() == Weekday::Sun)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohort_recovery_after_fifteen_days() {
        let mut inf = vec![0.0; 20];
        inf[0] = 10.0;
        let deaths = vec![0.0; 20];
        let sir = build_sir_series(&inf, &deaths, 1000.0).unwrap();
        // End of day 14: still infected. End of day 15: recovered.
        assert_eq!(sir.states[15].i(), 10.0);
        assert_eq!(sir.states[16].i(), 0.0);
        assert_eq!(sir.states[16].r(), 10.0);
        // Day-16 state (index 17) keeps them recovered.
        assert_eq!(sir.states[17].i(), 0.0);
        assert_eq!(sir.states[17].r(), 10.0);
    }

    #[test]
    fn no_infections_keeps_everyone_susceptible() {
        let sir = build_sir_series(&[0.0; 30], &[0.0; 30], 500.0).unwrap();
        for st in &sir.states {
            assert_eq!(st.s(), 500.0);
        }
    }

    #[test]
    fn deaths_deplete_the_oldest_cohort_first() {
        let mut inf = vec![0.0; 20];
        inf[0] = 10.0;
        let mut deaths = vec![0.0; 20];
        deaths[3] = 2.0;
        let sir = build_sir_series(&inf, &deaths, 1000.0).unwrap();
        // R gains 2 at the end of day 3 and the surviving 8 at day 15.
        assert_eq!(sir.states[4].r(), 2.0);
        assert_eq!(sir.states[4].i(), 8.0);
        assert_eq!(sir.states[15].r(), 2.0);
        assert_eq!(sir.states[16].r(), 10.0);
        assert_eq!(sir.states[16].i(), 0.0);
    }

    #[test]
    fn conservation_is_exact() {
        let inf: Vec<f64> = (0..60).map(|d| (d % 7) as f64 * 3.5).collect();
        let deaths: Vec<f64> = (0..60).map(|d| if d % 11 == 0 { 1.25 } else { 0.0 }).collect();
        let n = 10_000.0;
        let sir = build_sir_series(&inf, &deaths, n).unwrap();
        for st in &sir.states {
            assert_eq!(st.s() + st.i() + st.r(), n);
        }
    }

    #[test]
    fn excess_deaths_are_dropped_with_a_warning() {
        let inf = vec![1.0, 0.0, 0.0];
        let deaths = vec![0.0, 5.0, 0.0];
        let sir = build_sir_series(&inf, &deaths, 100.0).unwrap();
        assert_eq!(sir.depleted_days, 1);
        assert_eq!(sir.states[2].i(), 0.0);
        assert_eq!(sir.states[2].r(), 1.0);
    }
}
