//! Weekly epidemic forecasting built around an SIR model whose transmission
//! and recovery rates change over time.
//!
//! The crate is organised as a pipeline:
//!
//! * [`sir`] — discrete-time SIR state and stepping.
//! * [`fit`] — closed-form weekly estimation of (beta, gamma) from daily
//!   compartment trajectories.
//! * [`trend`] — AR(3) extrapolation of the weekly rates and the
//!   trend-following forecaster (tf-v-SIR) built on it.
//! * [`pgm`] — the discrete model over government policy changes: CPTs for
//!   trend-change/willingness/policy-change nodes, a small neural CPD for
//!   "urgency", and multi-week policy-chain inference.
//! * [`forecast`] — mixture-of-experts point forecasts blending tf-v-SIR and
//!   the SLOW (same-as-last-observed-week) baseline by the trend-change
//!   probability.
//! * [`data`] — CSV ingestion, cleaning, SIR series construction and policy
//!   timelines.
//! * [`eval`] — rolling-origin evaluation scored by MAPE.

pub mod data;
pub mod eval;
pub mod fit;
pub mod forecast;
pub mod pgm;
pub mod sir;
pub mod trend;

pub use fit::{FitConfig, WeeklyParams};
pub use forecast::Forecast;
pub use pgm::PgmConfig;
pub use sir::{RateParams, SirState};
pub use trend::TrendModel;

/// Forecast horizon in weeks, restricted to 1 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Horizon(u8);

impl Horizon {
    pub const MAX: u8 = 4;

    pub fn new(weeks: u8) -> Option<Self> {
        (1..=Self::MAX).contains(&weeks).then_some(Self(weeks))
    }

    pub fn weeks(self) -> u8 {
        self.0
    }

    /// Iterate the horizon steps 1..=h.
    pub fn steps(self) -> impl Iterator<Item = u8> {
        1..=self.0
    }
}

impl std::fmt::Display for Horizon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_bounds() {
        assert!(Horizon::new(0).is_none());
        assert!(Horizon::new(5).is_none());
        assert_eq!(Horizon::new(4).unwrap().weeks(), 4);
        let h = Horizon::new(3).unwrap();
        assert_eq!(h.steps().collect::<Vec<_>>(), vec![1, 2, 3]);
    }
}
