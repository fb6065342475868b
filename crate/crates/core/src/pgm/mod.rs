//! Discrete model of government policy changes.
//!
//! Four nodes drive the forecaster's gating:
//!
//! * `CT` — change of trend in new infections, conditioned on the policy
//!   changes two to four weeks earlier (CPT).
//! * `O`  — willingness of a government to change any policy, conditioned on
//!   whole weeks since the last change (CPT over binned weeks).
//! * `U`  — urgency to tighten or relax, a neural conditional distribution
//!   over weekly cases per 100K and their week-over-week change.
//! * `CP` — change of policy next week, conditioned on `O` and `U` (CPT).
//!
//! CPT entries are loaded from a TOML config; the shipped defaults are
//! constructed from qualitative rules (no change keeps the trend, the most
//! recent change sets the expected direction, willingness grows with time
//! since the last change) rather than fitted to data.

mod chain;
mod cpt;
mod nn;

pub use chain::{forecast_policy_chain, PolicyChainStep};
pub use cpt::{Cpt, CptSet};
pub use nn::{train_nn_cpd, NnCpd, SoftLabelDataset, SoftLabelRow, TrainParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normalization tolerance for every distribution handled by this module.
pub const DIST_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("CPT '{node}': {problem}")]
    BadCpt { node: String, problem: String },
    #[error("CPT '{node}' has no row for parent states ({tuple})")]
    MissingRow { node: String, tuple: String },
    #[error("invalid distribution ({context}): sum = {sum}")]
    BadDistribution { context: String, sum: f64 },
    #[error("invalid urgency features: {reason}")]
    BadFeatures { reason: String },
    #[error("soft-label dataset: {problem}")]
    BadDataset { problem: String },
    #[error("NN-CPD training diverged at epoch {epoch} (loss = {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },
    #[error("NN-CPD weights: {problem}")]
    BadWeights { problem: String },
    #[error("not enough history for policy-chain inference: {reason}")]
    NotEnoughHistory { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("weights parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset parse error: {0}")]
    Csv(#[from] csv::Error),
}

/// Three-valued change direction used by the CT, CP and U nodes
/// (down / no change / up, i.e. -1 / 0 / +1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Change {
    Down,
    Steady,
    Up,
}

impl Change {
    pub const ALL: [Change; 3] = [Change::Down, Change::Steady, Change::Up];

    pub fn index(self) -> usize {
        match self {
            Change::Down => 0,
            Change::Steady => 1,
            Change::Up => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_i8(self) -> i8 {
        self.index() as i8 - 1
    }

    pub fn from_i8(value: i8) -> Option<Self> {
        match value {
            -1 => Some(Change::Down),
            0 => Some(Change::Steady),
            1 => Some(Change::Up),
            _ => None,
        }
    }

    /// The canonical state label used in config files.
    pub fn label(self) -> &'static str {
        match self {
            Change::Down => "-1",
            Change::Steady => "0",
            Change::Up => "+1",
        }
    }
}

/// A validated probability vector over [`Change::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeDist([f64; 3]);

impl ChangeDist {
    pub fn new(p: [f64; 3], context: &str) -> Result<Self, PgmError> {
        let sum: f64 = p.iter().sum();
        if !p.iter().all(|x| x.is_finite() && (-DIST_TOL..=1.0 + DIST_TOL).contains(x))
            || (sum - 1.0).abs() > DIST_TOL
        {
            return Err(PgmError::BadDistribution {
                context: context.to_string(),
                sum,
            });
        }
        Ok(Self(p))
    }

    /// Point mass on one value.
    pub fn certain(value: Change) -> Self {
        let mut p = [0.0; 3];
        p[value.index()] = 1.0;
        Self(p)
    }

    pub fn p(&self, value: Change) -> f64 {
        self.0[value.index()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn argmax(&self) -> Change {
        let mut best = Change::Down;
        for c in Change::ALL {
            if self.0[c.index()] > self.0[best.index()] {
                best = c;
            }
        }
        best
    }
}

/// Inputs to the urgency node: weekly new infections per 100K inhabitants
/// and their week-over-week change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrgencyFeatures {
    pub cases_per_100k: f64,
    pub weekly_change: f64,
}

impl UrgencyFeatures {
    pub fn new(cases_per_100k: f64, weekly_change: f64) -> Result<Self, PgmError> {
        if !cases_per_100k.is_finite() || !weekly_change.is_finite() {
            return Err(PgmError::BadFeatures {
                reason: "non-finite feature".to_string(),
            });
        }
        if cases_per_100k < 0.0 {
            return Err(PgmError::BadFeatures {
                reason: format!("cases per 100K must be non-negative, got {cases_per_100k}"),
            });
        }
        Ok(Self {
            cases_per_100k,
            weekly_change,
        })
    }
}

/// The three observed policy-change lags conditioning a trend change, oldest
/// first (three weeks ago, two weeks ago, one week ago).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpLags {
    pub three_weeks_ago: Change,
    pub two_weeks_ago: Change,
    pub one_week_ago: Change,
}

impl CpLags {
    pub fn indices(&self) -> [usize; 3] {
        [
            self.three_weeks_ago.index(),
            self.two_weeks_ago.index(),
            self.one_week_ago.index(),
        ]
    }
}

/// Everything needed to run policy-change inference.
#[derive(Debug, Clone)]
pub struct PgmConfig {
    pub ct: Cpt,
    pub willingness: Cpt,
    pub cp: Cpt,
    pub urgency: NnCpd,
    /// SHA-256 over the loaded CPT config text, hex-encoded.
    pub cpt_checksum: String,
}

impl PgmConfig {
    pub fn new(cpts: CptSet, urgency: NnCpd) -> Self {
        Self {
            ct: cpts.ct,
            willingness: cpts.willingness,
            cp: cpts.cp,
            urgency,
            cpt_checksum: cpts.checksum,
        }
    }
}

/// Distribution of the trend-change node given three observed policy lags.
pub fn ct_distribution(lags: CpLags, cpt: &Cpt) -> Result<ChangeDist, PgmError> {
    cpt.expect_shape(&[3, 3, 3], 3)?;
    let row = cpt.row(&lags.indices())?;
    ChangeDist::new([row[0], row[1], row[2]], &format!("CT row {:?}", lags.indices()))
}

/// p(O = 0) and p(O = 1) given whole weeks since the last policy change.
///
/// Weeks are binned by the willingness CPT's parent states; the final bin is
/// open-ended, so any count at or past it maps to the last row.
pub fn willingness_distribution(weeks_since_change: u32, cpt: &Cpt) -> Result<[f64; 2], PgmError> {
    if cpt.parent_arity().len() != 1 || cpt.child_arity() != 2 {
        return Err(PgmError::BadCpt {
            node: cpt.name().to_string(),
            problem: "willingness CPT must have one binned parent and a binary child".to_string(),
        });
    }
    let bins = cpt.parent_arity()[0];
    let bin = (weeks_since_change as usize).min(bins - 1);
    let row = cpt.row(&[bin])?;
    Ok([row[0], row[1]])
}

/// Distribution of next week's policy change given willingness and urgency.
pub fn cp_distribution(willing: bool, urgency: Change, cpt: &Cpt) -> Result<ChangeDist, PgmError> {
    cpt.expect_shape(&[2, 3], 3)?;
    let row = cpt.row(&[usize::from(willing), urgency.index()])?;
    ChangeDist::new(
        [row[0], row[1], row[2]],
        &format!("CP row (o={}, u={})", willing, urgency.label()),
    )
}

/// Urgency distribution from the neural CPD.
pub fn urgency_distribution(features: UrgencyFeatures, net: &NnCpd) -> ChangeDist {
    let p = net.predict(features.cases_per_100k, features.weekly_change);
    // Softmax output is normalized by construction.
    ChangeDist(p)
}
