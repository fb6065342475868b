//! Discrete-time SIR state and simulation.
//!
//! The model tracks susceptible (S), infected (I) and removed (R) counts in a
//! closed population of size N. One `step` advances the difference equations
//!
//! ```text
//! S' = S - beta * S * I / N
//! I' = I + beta * S * I / N - gamma * I
//! R' = N - S' - I'
//! ```
//!
//! The step length is whatever time unit `beta` and `gamma` are expressed in;
//! the fitting code uses daily steps and the forecasters run seven daily
//! steps per forecast week.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance on the S + I + R = N invariant.
pub const CONSERVATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SirError {
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("invalid SIR state: {reason} (s={s}, i={i}, r={r}, n={n})")]
    InvalidState {
        reason: &'static str,
        s: f64,
        i: f64,
        r: f64,
        n: f64,
    },
    #[error("negative rate: {name} = {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("empty parameter sequence")]
    EmptyParamSequence,
}

/// Compartment counts at one time point. Counts are real-valued; rounding to
/// whole persons happens only at reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirState {
    s: f64,
    i: f64,
    r: f64,
    n: f64,
}

impl SirState {
    /// Build a state, validating non-negativity, finiteness and conservation.
    pub fn new(s: f64, i: f64, r: f64, n: f64) -> Result<Self, SirError> {
        if !(s.is_finite() && i.is_finite() && r.is_finite() && n.is_finite()) {
            return Err(SirError::NonFinite {
                context: "SIR state",
            });
        }
        let state = Self { s, i, r, n };
        state.check()?;
        Ok(state)
    }

    /// Fresh population of size `n` with no infections yet.
    pub fn fully_susceptible(n: f64) -> Result<Self, SirError> {
        Self::new(n, 0.0, 0.0, n)
    }

    fn check(&self) -> Result<(), SirError> {
        let reason = if self.n <= 0.0 {
            Some("population must be positive")
        } else if self.s < 0.0 || self.i < 0.0 || self.r < 0.0 {
            Some("negative compartment")
        } else if (self.s + self.i + self.r - self.n).abs() > CONSERVATION_TOL * self.n {
            Some("compartments do not sum to the population")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(SirError::InvalidState {
                reason,
                s: self.s,
                i: self.i,
                r: self.r,
                n: self.n,
            }),
            None => Ok(()),
        }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn i(&self) -> f64 {
        self.i
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn n(&self) -> f64 {
        self.n
    }
}

/// Transmission and recovery rates for one step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub beta: f64,
    pub gamma: f64,
}

impl RateParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self, SirError> {
        if !(beta.is_finite() && gamma.is_finite()) {
            return Err(SirError::NonFinite {
                context: "rate parameters",
            });
        }
        if beta < 0.0 {
            return Err(SirError::NegativeRate {
                name: "beta",
                value: beta,
            });
        }
        if gamma < 0.0 {
            return Err(SirError::NegativeRate {
                name: "gamma",
                value: gamma,
            });
        }
        Ok(Self { beta, gamma })
    }
}

/// Advance the state by one step.
///
/// Degenerate flows are clamped so the result stays a valid state: new
/// infections never exceed S, and removals never exceed the infected pool.
pub fn step(state: &SirState, params: &RateParams) -> Result<SirState, SirError> {
    state.check()?;
    if !(params.beta.is_finite() && params.gamma.is_finite()) {
        return Err(SirError::NonFinite {
            context: "rate parameters",
        });
    }
    if params.beta < 0.0 || params.gamma < 0.0 {
        return Err(SirError::NegativeRate {
            name: if params.beta < 0.0 { "beta" } else { "gamma" },
            value: params.beta.min(params.gamma),
        });
    }

    let infections = (params.beta * state.s * state.i / state.n).min(state.s);
    let removals = (params.gamma * state.i).min(state.i);
    let s = state.s - infections;
    let i = state.i + infections - removals;
    let r = state.n - s - i;
    Ok(SirState {
        s,
        i,
        r,
        n: state.n,
    })
}

/// Run `step` once per entry of `params`, returning the trajectory.
///
/// `result[k]` is the state after applying `params[0..=k]`; the initial state
/// is not included.
pub fn simulate(initial: &SirState, params: &[RateParams]) -> Result<Vec<SirState>, SirError> {
    if params.is_empty() {
        return Err(SirError::EmptyParamSequence);
    }
    let mut out = Vec::with_capacity(params.len());
    let mut current = *initial;
    for p in params {
        current = step(&current, p)?;
        out.push(current);
    }
    Ok(out)
}

/// New infections between two states of the same population: the drop in S,
/// floored at zero. Both states must share the same `n`.
pub fn new_infections(prev: &SirState, next: &SirState) -> f64 {
    debug_assert!(
        (prev.n - next.n).abs() <= f64::EPSILON * prev.n,
        "states from different populations"
    );
    (prev.s - next.s).max(0.0)
}
