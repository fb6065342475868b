//! Neural conditional distribution for the urgency node.
//!
//! A two-input network (weekly cases per 100K, week-over-week change) with a
//! 64-unit sigmoid hidden layer and a 3-way softmax head. It is trained by
//! full-batch gradient descent against soft target distributions, so the few
//! available rows carry probabilistic rather than hard labels.
//!
//! Inputs are standardized by the training set's mean and scale, which are
//! stored with the weights; the weights file round-trips bit-exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use super::PgmError;

pub const INPUTS: usize = 2;
pub const HIDDEN: usize = 64;
pub const OUTPUTS: usize = 3;

const WEIGHTS_VERSION: u32 = 1;

/// One training row: raw features plus a soft label over (down, steady, up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLabelRow {
    pub cases_per_100k: f64,
    pub weekly_change: f64,
    pub label: [f64; 3],
}

impl SoftLabelRow {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for k in 1..3 {
            if self.label[k] > self.label[best] {
                best = k;
            }
        }
        best
    }
}

/// Soft-label training set, loaded from CSV with columns
/// `c, v, p_minus1, p_0, p_plus1`.
#[derive(Debug, Clone, Default)]
pub struct SoftLabelDataset {
    pub rows: Vec<SoftLabelRow>,
}

impl SoftLabelDataset {
    pub fn new(rows: Vec<SoftLabelRow>) -> Result<Self, PgmError> {
        let ds = Self { rows };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), PgmError> {
        if self.rows.is_empty() {
            return Err(PgmError::BadDataset {
                problem: "no rows".to_string(),
            });
        }
        for (k, row) in self.rows.iter().enumerate() {
            let sum: f64 = row.label.iter().sum();
            if !row.label.iter().all(|p| p.is_finite() && *p >= 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(PgmError::BadDataset {
                    problem: format!("row {k}: label does not sum to 1 (sum {sum})"),
                });
            }
            if !row.cases_per_100k.is_finite()
                || !row.weekly_change.is_finite()
                || row.cases_per_100k < 0.0
            {
                return Err(PgmError::BadDataset {
                    problem: format!("row {k}: invalid features"),
                });
            }
        }
        Ok(())
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self, PgmError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for record in rdr.deserialize::<(f64, f64, f64, f64, f64)>() {
            let (c, v, pm, p0, pp) = record?;
            rows.push(SoftLabelRow {
                cases_per_100k: c,
                weekly_change: v,
                label: [pm, p0, pp],
            });
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self, PgmError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv(file)
    }

    /// Per-feature mean and standard deviation (population form), with a
    /// floor of 1 on the scale so constant features stay finite.
    pub fn standardization(&self) -> ([f64; 2], [f64; 2]) {
        let n = self.rows.len() as f64;
        let mut mean = [0.0; 2];
        for row in &self.rows {
            mean[0] += row.cases_per_100k;
            mean[1] += row.weekly_change;
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut var = [0.0; 2];
        for row in &self.rows {
            var[0] += (row.cases_per_100k - mean[0]).powi(2);
            var[1] += (row.weekly_change - mean[1]).powi(2);
        }
        let std = [(var[0] / n).sqrt(), (var[1] / n).sqrt()];
        let scale = [
            if std[0] > 0.0 { std[0] } else { 1.0 },
            if std[1] > 0.0 { std[1] } else { 1.0 },
        ];
        (mean, scale)
    }
}

/// Training hyperparameters. Fixed, full-batch; logged at training start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub step_size: f64,
    pub epochs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            epochs: 5000,
        }
    }
}

/// The trained urgency network with its standardization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnCpd {
    version: u32,
    /// [input][hidden]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    /// [hidden][output]
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    feat_mean: [f64; 2],
    feat_scale: [f64; 2],
    /// Metadata about how the net was produced.
    pub train_seed: u64,
    pub train_params: TrainParams,
    pub final_loss: f64,
}

impl NnCpd {
    fn init(seed: u64, feat_mean: [f64; 2], feat_scale: [f64; 2]) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let r1 = (6.0 / (INPUTS + HIDDEN) as f64).sqrt();
        let r2 = (6.0 / (HIDDEN + OUTPUTS) as f64).sqrt();
        let w1 = (0..INPUTS)
            .map(|_| (0..HIDDEN).map(|_| rng.random_range(-r1..r1)).collect())
            .collect();
        let w2 = (0..HIDDEN)
            .map(|_| (0..OUTPUTS).map(|_| rng.random_range(-r2..r2)).collect())
            .collect();
        Self {
            version: WEIGHTS_VERSION,
            w1,
            b1: vec![0.0; HIDDEN],
            w2,
            b2: vec![0.0; OUTPUTS],
            feat_mean,
            feat_scale,
            train_seed: seed,
            train_params: TrainParams::default(),
            final_loss: f64::NAN,
        }
    }

    fn standardize(&self, c: f64, v: f64) -> [f64; 2] {
        [
            (c - self.feat_mean[0]) / self.feat_scale[0],
            (v - self.feat_mean[1]) / self.feat_scale[1],
        ]
    }

    /// Softmax distribution over (down, steady, up) for raw features.
    pub fn predict(&self, cases_per_100k: f64, weekly_change: f64) -> [f64; 3] {
        let x = self.standardize(cases_per_100k, weekly_change);
        let (_, p) = self.forward(&x);
        p
    }

    /// Hidden activations and softmax output for standardized features.
    fn forward(&self, x: &[f64; 2]) -> ([f64; HIDDEN], [f64; 3]) {
        let mut h = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            let z = self.b1[j] + self.w1[0][j] * x[0] + self.w1[1][j] * x[1];
            h[j] = sigmoid(z);
        }
        let mut z2 = [0.0; 3];
        for (k, z) in z2.iter_mut().enumerate() {
            *z = self.b2[k];
            for (j, hj) in h.iter().enumerate() {
                *z += self.w2[j][k] * hj;
            }
        }
        (h, softmax3(&z2))
    }

    /// Mean cross-entropy against the soft labels, plus its gradient in
    /// [`flatten_params`](Self::flatten_params) order.
    pub fn loss_and_gradient(&self, dataset: &SoftLabelDataset) -> (f64, Vec<f64>) {
        let n = dataset.rows.len() as f64;
        let mut loss = 0.0;
        let mut gw1 = vec![vec![0.0; HIDDEN]; INPUTS];
        let mut gb1 = vec![0.0; HIDDEN];
        let mut gw2 = vec![vec![0.0; OUTPUTS]; HIDDEN];
        let mut gb2 = vec![0.0; OUTPUTS];

        for row in &dataset.rows {
            let x = self.standardize(row.cases_per_100k, row.weekly_change);
            let mut z2 = [0.0; 3];
            let mut h = [0.0; HIDDEN];
            for j in 0..HIDDEN {
                let z = self.b1[j] + self.w1[0][j] * x[0] + self.w1[1][j] * x[1];
                h[j] = sigmoid(z);
            }
            for (k, z) in z2.iter_mut().enumerate() {
                *z = self.b2[k];
                for (j, hj) in h.iter().enumerate() {
                    *z += self.w2[j][k] * hj;
                }
            }
            let lse = log_sum_exp3(&z2);
            for k in 0..3 {
                loss -= row.label[k] * (z2[k] - lse);
            }

            // d loss / d z2 = softmax(z2) - label
            let p = softmax3(&z2);
            let mut g2 = [0.0; 3];
            for k in 0..3 {
                g2[k] = p[k] - row.label[k];
            }
            for j in 0..HIDDEN {
                let mut gh = 0.0;
                for k in 0..3 {
                    gw2[j][k] += h[j] * g2[k];
                    gh += self.w2[j][k] * g2[k];
                }
                let g1 = gh * h[j] * (1.0 - h[j]);
                gb1[j] += g1;
                gw1[0][j] += x[0] * g1;
                gw1[1][j] += x[1] * g1;
            }
            for k in 0..3 {
                gb2[k] += g2[k];
            }
        }

        loss /= n;
        let mut grad = Vec::with_capacity(self.param_count());
        for row in &gw1 {
            grad.extend(row.iter().map(|g| g / n));
        }
        grad.extend(gb1.iter().map(|g| g / n));
        for row in &gw2 {
            grad.extend(row.iter().map(|g| g / n));
        }
        grad.extend(gb2.iter().map(|g| g / n));
        (loss, grad)
    }

    pub fn param_count(&self) -> usize {
        INPUTS * HIDDEN + HIDDEN + HIDDEN * OUTPUTS + OUTPUTS
    }

    /// All parameters as one vector: w1 row-major, b1, w2 row-major, b2.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for row in &self.w1 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b1);
        for row in &self.w2 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter();
        for row in &mut self.w1 {
            for w in row {
                *w = *it.next().unwrap();
            }
        }
        for b in &mut self.b1 {
            *b = *it.next().unwrap();
        }
        for row in &mut self.w2 {
            for w in row {
                *w = *it.next().unwrap();
            }
        }
        for b in &mut self.b2 {
            *b = *it.next().unwrap();
        }
    }

    // --- persistence --------------------------------------------------------

    pub fn to_json(&self) -> Result<String, PgmError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PgmError> {
        let net: Self = serde_json::from_str(text)?;
        net.check_shape()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), PgmError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PgmError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    fn check_shape(&self) -> Result<(), PgmError> {
        let ok = self.version == WEIGHTS_VERSION
            && self.w1.len() == INPUTS
            && self.w1.iter().all(|r| r.len() == HIDDEN)
            && self.b1.len() == HIDDEN
            && self.w2.len() == HIDDEN
            && self.w2.iter().all(|r| r.len() == OUTPUTS)
            && self.b2.len() == OUTPUTS
            && self.feat_scale.iter().all(|s| *s > 0.0);
        if ok {
            Ok(())
        } else {
            Err(PgmError::BadWeights {
                problem: "shape header does not match the expected architecture".to_string(),
            })
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp3(z: &[f64; 3]) -> f64 {
    let m = z[0].max(z[1]).max(z[2]);
    m + ((z[0] - m).exp() + (z[1] - m).exp() + (z[2] - m).exp()).ln()
}

fn softmax3(z: &[f64; 3]) -> [f64; 3] {
    let lse = log_sum_exp3(z);
    [(z[0] - lse).exp(), (z[1] - lse).exp(), (z[2] - lse).exp()]
}

/// Train the urgency network from the soft-label dataset.
///
/// Deterministic for a given seed: weight init comes from a seeded ChaCha
/// generator and the descent is full-batch with a fixed step and epoch
/// budget. Errors out if the loss stops being finite.
pub fn train_nn_cpd(
    dataset: &SoftLabelDataset,
    seed: u64,
    params: TrainParams,
) -> Result<NnCpd, PgmError> {
    dataset.validate()?;
    let (mean, scale) = dataset.standardization();
    let mut net = NnCpd::init(seed, mean, scale);
    net.train_params = params;
    log::info!(
        "training NN-CPD: {} rows, step {}, {} epochs, seed {}",
        dataset.rows.len(),
        params.step_size,
        params.epochs,
        seed
    );

    let mut flat = net.flatten_params();
    let mut last_loss = f64::NAN;
    for epoch in 0..params.epochs {
        let (loss, grad) = net.loss_and_gradient(dataset);
        if !loss.is_finite() {
            return Err(PgmError::TrainingDiverged { epoch, loss });
        }
        for (w, g) in flat.iter_mut().zip(&grad) {
            *w -= params.step_size * g;
        }
        net.set_flat_params(&flat);
        last_loss = loss;
    }
    net.final_loss = last_loss;
    log::info!("NN-CPD training done: final loss {last_loss:.6}");
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dataset() -> SoftLabelDataset {
        SoftLabelDataset::new(vec![
            SoftLabelRow {
                cases_per_100k: 5.0,
                weekly_change: -2.0,
                label: [0.7, 0.3, 0.0],
            },
            SoftLabelRow {
                cases_per_100k: 50.0,
                weekly_change: 0.0,
                label: [0.1, 0.8, 0.1],
            },
            SoftLabelRow {
                cases_per_100k: 300.0,
                weekly_change: 60.0,
                label: [0.0, 0.2, 0.8],
            },
        ])
        .unwrap()
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let err = SoftLabelDataset::new(vec![SoftLabelRow {
            cases_per_100k: 1.0,
            weekly_change: 0.0,
            label: [0.5, 0.6, 0.1],
        }]);
        assert!(err.is_err());
        assert!(SoftLabelDataset::new(vec![]).is_err());
    }

    #[test]
    fn csv_parsing() {
        let text = "c,v,p_minus1,p_0,p_plus1\n10.0,5.0,0.1,0.6,0.3\n0,-3,0.8,0.2,0\n";
        let ds = SoftLabelDataset::from_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.rows.len(), 2);
        assert_eq!(ds.rows[1].label, [0.8, 0.2, 0.0]);
    }

    #[test]
    fn prediction_is_a_distribution() {
        let net = train_nn_cpd(&small_dataset(), 3, TrainParams { step_size: 0.05, epochs: 50 })
            .unwrap();
        let p = net.predict(20.0, 1.0);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn single_row_is_fit_closely() {
        let ds = SoftLabelDataset::new(vec![SoftLabelRow {
            cases_per_100k: 10.0,
            weekly_change: 0.0,
            label: [0.0, 1.0, 0.0],
        }])
        .unwrap();
        let net = train_nn_cpd(&ds, 1, TrainParams::default()).unwrap();
        let p = net.predict(10.0, 0.0);
        assert!(p[1] > 0.95, "p = {p:?}");
    }

    #[test]
    fn training_beats_uniform_predictor() {
        let ds = small_dataset();
        let net = train_nn_cpd(&ds, 5, TrainParams::default()).unwrap();
        // Uniform predictor loss: -(1/n) sum log(1/3) = ln 3.
        assert!(net.final_loss < (3.0f64).ln());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let ds = small_dataset();
        // An untrained net with a fixed seed gives generic parameter values.
        let (mean, scale) = ds.standardization();
        let mut net = NnCpd::init(42, mean, scale);
        let (_, grad) = net.loss_and_gradient(&ds);
        let flat = net.flatten_params();
        let step = 1e-5;
        // Spot-check a deterministic spread of coordinates.
        for idx in (0..flat.len()).step_by(17) {
            let mut plus = flat.clone();
            plus[idx] += step;
            net.set_flat_params(&plus);
            let (lp, _) = net.loss_and_gradient(&ds);
            let mut minus = flat.clone();
            minus[idx] -= step;
            net.set_flat_params(&minus);
            let (lm, _) = net.loss_and_gradient(&ds);
            net.set_flat_params(&flat);
            let fd = (lp - lm) / (2.0 * step);
            let denom = fd.abs().max(grad[idx].abs()).max(1e-8);
            assert!(
                (fd - grad[idx]).abs() / denom < 1e-4,
                "param {idx}: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = small_dataset();
        let p = TrainParams { step_size: 0.05, epochs: 200 };
        let a = train_nn_cpd(&ds, 9, p).unwrap();
        let b = train_nn_cpd(&ds, 9, p).unwrap();
        assert_eq!(a.flatten_params(), b.flatten_params());
        assert_eq!(a.final_loss, b.final_loss);
        let c = train_nn_cpd(&ds, 10, p).unwrap();
        assert_ne!(a.flatten_params(), c.flatten_params());
    }

    #[test]
    fn weights_round_trip_bit_exactly() {
        let ds = small_dataset();
        let net = train_nn_cpd(&ds, 7, TrainParams { step_size: 0.05, epochs: 100 }).unwrap();
        let json = net.to_json().unwrap();
        let back = NnCpd::from_json(&json).unwrap();
        assert_eq!(net.flatten_params(), back.flatten_params());
        assert_eq!(net.feat_mean, back.feat_mean);
        assert_eq!(net.feat_scale, back.feat_scale);
        // Predictions are bitwise identical too.
        assert_eq!(net.predict(33.0, 4.0), back.predict(33.0, 4.0));
    }

    #[test]
    fn malformed_weights_are_rejected() {
        let ds = small_dataset();
        let net = train_nn_cpd(&ds, 7, TrainParams { step_size: 0.05, epochs: 10 }).unwrap();
        let json = net.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(NnCpd::from_json(&json).is_err());
    }
}
