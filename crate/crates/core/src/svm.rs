//! Linear two-class SVM with sigmoid probability calibration.
//!
//! The trainer minimizes the L1 hinge primal
//!
//! ```text
//! J(w, b) = 0.5 * ||w||^2 + sum_i C_i * max(0, 1 - y_i * (w . x_i + b))
//! ```
//!
//! by dual coordinate descent over bias-augmented features, followed by a
//! polish phase that alternates coordinate descent at fixed bias with an
//! exact one-dimensional bias refit (the hinge sum is piecewise linear in
//! `b`, so its minimum sits on a breakpoint and can be found by a sorted
//! sweep). The reported model is the best primal iterate seen, which makes
//! the per-epoch objective non-increasing by construction.
//!
//! Calibration maps decision values to probabilities through
//! `P(moving | f) = 1 / (1 + exp(a*f + b))` fitted by Newton's method with
//! backtracking on Platt's smoothed targets.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mchog::MchogParams;
use crate::silhouette::RoiSpec;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training set must contain both classes")]
    DegenerateData,
    #[error("expected {want} features, got {got}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("calibration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("bad sample: {0}")]
    BadSample(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model file: {0}")]
    BadModelFile(String),
}

/// Row-major feature matrix with one ±1 label per row.
#[derive(Debug, Clone)]
pub struct TrainSet {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<i8>,
}

impl TrainSet {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, label: i8, features: &[f64]) -> Result<(), SvmError> {
        if label != -1 && label != 1 {
            return Err(SvmError::BadSample(format!(
                "label must be -1 or +1, got {label}"
            )));
        }
        if features.len() != self.n_features {
            return Err(SvmError::DimensionMismatch {
                want: self.n_features,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::BadSample("non-finite feature value".into()));
        }
        self.features.extend_from_slice(features);
        self.labels.push(label);
        Ok(())
    }

    pub fn from_rows(n_features: usize, rows: &[(i8, Vec<f64>)]) -> Result<Self, SvmError> {
        let mut set = Self::new(n_features);
        for (label, values) in rows {
            set.push(*label, values)?;
        }
        Ok(set)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y > 0).count();
        (pos, self.labels.len() - pos)
    }
}

/// SHA-256 over the raw label and feature bits, hex encoded. Identifies a
/// training set exactly, independent of file paths.
pub fn train_fingerprint(set: &TrainSet) -> String {
    let mut hasher = Sha256::new();
    hasher.update((set.n_features as u64).to_le_bytes());
    for i in 0..set.n_samples() {
        hasher.update([set.label(i) as u8]);
        for v in set.features(i) {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Scale C per class by inverse class frequency.
    pub balance_classes: bool,
    /// Constant pseudo-feature magnitude used to learn the bias inside the
    /// dual solver; the final bias is refit exactly, so this only shapes
    /// the search path. Values much above 1 inflate the diagonal of the
    /// dual and slow coordinate descent to a crawl.
    pub bias_scale: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 0.031_25,
            tol: 1e-6,
            max_epochs: 1000,
            seed: 0,
            balance_classes: false,
            bias_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c_param: f64,
}

impl LinearSvmModel {
    /// `w . x + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.weights.len() {
            return Err(SvmError::DimensionMismatch {
                want: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }
}

/// Training result: the model plus the per-epoch best objective, which is
/// non-increasing.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: LinearSvmModel,
    pub objective_by_epoch: Vec<f64>,
    pub epochs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn class_costs(set: &TrainSet, params: &SvmParams) -> (f64, f64) {
    if params.balance_classes {
        let (pos, neg) = set.class_counts();
        let n = set.n_samples() as f64;
        (
            params.c * n / (2.0 * pos as f64),
            params.c * n / (2.0 * neg as f64),
        )
    } else {
        (params.c, params.c)
    }
}

/// Exact minimizer of `sum_i C_i * max(0, 1 - y_i * (d_i + b))` over `b`.
///
/// The sum is convex and piecewise linear; every sample contributes one
/// breakpoint where the running slope jumps up by its cost, so the first
/// breakpoint at which the accumulated slope turns non-negative is a
/// minimizer.
pub fn optimal_bias(decisions: &[f64], labels: &[i8], c_pos: f64, c_neg: f64) -> f64 {
    assert_eq!(decisions.len(), labels.len());
    assert!(!decisions.is_empty());
    let mut events: Vec<(f64, f64)> = decisions
        .iter()
        .zip(labels)
        .map(|(&d, &y)| {
            if y > 0 {
                (1.0 - d, c_pos)
            } else {
                (-1.0 - d, c_neg)
            }
        })
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut slope: f64 = -(labels.iter().filter(|&&y| y > 0).count() as f64) * c_pos;
    for (b, jump) in &events {
        slope += jump;
        if slope >= 0.0 {
            return *b;
        }
    }
    // only reachable when no positive-slope mass exists, which the
    // both-classes precondition rules out
    events.last().unwrap().0
}

fn hinge_sum(decisions: &[f64], labels: &[i8], bias: f64, c_pos: f64, c_neg: f64) -> f64 {
    decisions
        .iter()
        .zip(labels)
        .map(|(&d, &y)| {
            let cost = if y > 0 { c_pos } else { c_neg };
            cost * (1.0 - y as f64 * (d + bias)).max(0.0)
        })
        .sum()
}

/// `0.5 ||w||^2` plus the weighted hinge sum.
pub fn primal_objective(
    weights: &[f64],
    bias: f64,
    set: &TrainSet,
    c_pos: f64,
    c_neg: f64,
) -> f64 {
    let decisions: Vec<f64> = (0..set.n_samples())
        .map(|i| dot(weights, set.features(i)))
        .collect();
    0.5 * dot(weights, weights) + hinge_sum(&decisions, set.labels(), bias, c_pos, c_neg)
}

struct Tracker {
    weights: Vec<f64>,
    bias: f64,
    objective: f64,
    history: Vec<f64>,
}

/// Epochs the polish phase may spend without relative improvement above
/// `tol` before it stops.
const STALL_WINDOW: usize = 10;

impl Tracker {
    /// Refit the bias exactly for the given decisions `w . x_i`, record the
    /// best iterate, and return the refit bias for these weights.
    fn observe(&mut self, decisions: &[f64], weights: &[f64], set: &TrainSet, costs: (f64, f64)) -> f64 {
        let bias = optimal_bias(decisions, set.labels(), costs.0, costs.1);
        let objective =
            0.5 * dot(weights, weights) + hinge_sum(decisions, set.labels(), bias, costs.0, costs.1);
        let previous = self.objective;
        if objective < self.objective {
            self.weights.clear();
            self.weights.extend_from_slice(weights);
            self.bias = bias;
            self.objective = objective;
        }
        assert!(
            self.objective <= previous,
            "best objective regressed: {} -> {}",
            previous,
            self.objective
        );
        self.history.push(self.objective);
        bias
    }

    /// True when the best objective improved by less than `tol`
    /// (relatively) over the last `STALL_WINDOW` epochs of this phase.
    fn stalled(&self, phase_start: usize, tol: f64) -> bool {
        let epochs_in_phase = self.history.len() - phase_start;
        if epochs_in_phase <= STALL_WINDOW {
            return false;
        }
        let reference = self.history[self.history.len() - 1 - STALL_WINDOW];
        reference - self.objective <= tol * reference.abs().max(f64::EPSILON)
    }
}

/// One pass of dual coordinate descent in random order. `bias_scale = 0`
/// solves at the fixed bias `fixed_b`; a positive scale learns the bias as
/// an extra feature (then `fixed_b` must be 0). Returns the largest
/// projected gradient seen.
#[allow(clippy::too_many_arguments)]
fn cd_epoch(
    set: &TrainSet,
    alpha: &mut [f64],
    w: &mut [f64],
    w_aug: &mut f64,
    bias_scale: f64,
    fixed_b: f64,
    costs: (f64, f64),
    q: &[f64],
    order: &[usize],
) -> f64 {
    let mut max_pg = 0.0f64;
    for &i in order {
        if q[i] == 0.0 {
            continue;
        }
        let x = set.features(i);
        let y = set.label(i) as f64;
        let cost = if set.label(i) > 0 { costs.0 } else { costs.1 };
        let g = y * (dot(w, x) + *w_aug * bias_scale + fixed_b) - 1.0;
        let pg = if alpha[i] <= 0.0 {
            g.min(0.0)
        } else if alpha[i] >= cost {
            g.max(0.0)
        } else {
            g
        };
        max_pg = max_pg.max(pg.abs());
        if pg != 0.0 {
            let old = alpha[i];
            let new = (old - g / q[i]).clamp(0.0, cost);
            let delta = new - old;
            if delta != 0.0 {
                alpha[i] = new;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += delta * y * xj;
                }
                *w_aug += delta * y * bias_scale;
            }
        }
    }
    max_pg
}

pub fn train_svm(set: &TrainSet, params: &SvmParams) -> Result<SvmFit, SvmError> {
    if params.c <= 0.0 || !params.c.is_finite() {
        return Err(SvmError::InvalidParam("C must be positive".into()));
    }
    if params.tol <= 0.0 {
        return Err(SvmError::InvalidParam("tol must be positive".into()));
    }
    if params.bias_scale <= 0.0 {
        return Err(SvmError::InvalidParam("bias_scale must be positive".into()));
    }
    if params.max_epochs == 0 {
        return Err(SvmError::InvalidParam("max_epochs must be positive".into()));
    }
    let (pos, neg) = set.class_counts();
    if pos == 0 || neg == 0 {
        return Err(SvmError::DegenerateData);
    }

    let n = set.n_samples();
    let d = set.n_features();
    let costs = class_costs(set, params);
    let norms: Vec<f64> = (0..n).map(|i| dot(set.features(i), set.features(i))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d];
    let mut w_aug = 0.0f64;
    let mut tracker = Tracker {
        weights: vec![0.0; d],
        bias: 0.0,
        objective: f64::INFINITY,
        history: Vec::new(),
    };

    // phase 1: learn the bias as a scaled constant feature. Primal
    // improvement is a poor stopping signal here (the exact-bias iterate
    // can plateau epochs before the dual is done), so the phase runs until
    // weak duality certifies the augmented objective within `tol`.
    let q_aug: Vec<f64> = norms
        .iter()
        .map(|v| v + params.bias_scale * params.bias_scale)
        .collect();
    let mut epochs = 0;
    while epochs < params.max_epochs {
        order.shuffle(&mut rng);
        let max_pg = cd_epoch(
            set,
            &mut alpha,
            &mut w,
            &mut w_aug,
            params.bias_scale,
            0.0,
            costs,
            &q_aug,
            &order,
        );
        epochs += 1;
        let decisions: Vec<f64> = (0..n).map(|i| dot(&w, set.features(i))).collect();
        tracker.observe(&decisions, &w, set, costs);
        let regularizer = 0.5 * (dot(&w, &w) + w_aug * w_aug);
        let primal_aug = regularizer
            + hinge_sum(
                &decisions,
                set.labels(),
                params.bias_scale * w_aug,
                costs.0,
                costs.1,
            );
        let dual = alpha.iter().sum::<f64>() - regularizer;
        if primal_aug - dual <= params.tol * primal_aug.abs().max(1.0) || max_pg < 1e-12 {
            break;
        }
    }

    // phase 2: polish at an exactly refit bias, alternating coordinate
    // descent over w with the one-dimensional bias refit. The working
    // iterate continues from phase 1, so the duals stay consistent with w.
    let mut fixed_b = {
        let decisions: Vec<f64> = (0..n).map(|i| dot(&w, set.features(i))).collect();
        optimal_bias(&decisions, set.labels(), costs.0, costs.1)
    };
    w_aug = 0.0;
    let phase_start = tracker.history.len();
    while epochs < params.max_epochs {
        order.shuffle(&mut rng);
        let max_pg = cd_epoch(
            set,
            &mut alpha,
            &mut w,
            &mut w_aug,
            0.0,
            fixed_b,
            costs,
            &norms,
            &order,
        );
        epochs += 1;
        let decisions: Vec<f64> = (0..n).map(|i| dot(&w, set.features(i))).collect();
        let refit_b = tracker.observe(&decisions, &w, set, costs);
        let bias_settled = (refit_b - fixed_b).abs() <= 1e-12 * fixed_b.abs().max(1.0);
        fixed_b = refit_b;
        if tracker.stalled(phase_start, params.tol) || (max_pg < 1e-12 && bias_settled) {
            break;
        }
    }

    Ok(SvmFit {
        model: LinearSvmModel {
            weights: tracker.weights,
            bias: tracker.bias,
            c_param: params.c,
        },
        objective_by_epoch: tracker.history,
        epochs,
    })
}

// --- calibration ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibration {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibration {
    /// `P(moving | f) = 1 / (1 + exp(a*f + b))`, evaluated stably.
    pub fn probability(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Mean smoothed-target cross-entropy. The mean (rather than the sum)
/// keeps the objective and its gradient on an O(1) scale regardless of the
/// sample count, so the convergence threshold stays meaningful.
fn platt_objective(decisions: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for (&f, &t) in decisions.iter().zip(targets) {
        let z = a * f + b;
        if z >= 0.0 {
            total += t * z + (1.0 + (-z).exp()).ln();
        } else {
            total += (t - 1.0) * z + (1.0 + z.exp()).ln();
        }
    }
    total / decisions.len() as f64
}

pub const PLATT_MAX_ITER: usize = 100;

pub fn fit_platt(decisions: &[f64], labels: &[i8]) -> Result<PlattCalibration, SvmError> {
    fit_platt_capped(decisions, labels, PLATT_MAX_ITER)
}

/// Newton iterations with Armijo backtracking on the smoothed-target
/// cross-entropy. The iteration cap is exposed so the failure path can be
/// exercised deterministically.
pub fn fit_platt_capped(
    decisions: &[f64],
    labels: &[i8],
    max_iter: usize,
) -> Result<PlattCalibration, SvmError> {
    if decisions.len() != labels.len() {
        return Err(SvmError::DimensionMismatch {
            want: decisions.len(),
            got: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y > 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SvmError::DegenerateData);
    }
    let t_pos = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let t_neg = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0 { t_pos } else { t_neg })
        .collect();

    let ridge = 1e-12;
    let grad_eps = 1e-8;
    let min_step = 1e-10;
    let mut a = 0.0f64;
    let mut b = ((n_neg as f64 + 1.0) / (n_pos as f64 + 1.0)).ln();
    let mut fval = platt_objective(decisions, &targets, a, b);

    let scale = 1.0 / decisions.len() as f64;
    for iter in 0..=max_iter {
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        let mut h11 = ridge;
        let mut h22 = ridge;
        let mut h21 = 0.0;
        for (&f, &t) in decisions.iter().zip(&targets) {
            let z = a * f + b;
            let p = if z >= 0.0 {
                let e = (-z).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + z.exp())
            };
            let d1 = scale * (t - p);
            g1 += f * d1;
            g2 += d1;
            let d2 = scale * p * (1.0 - p);
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
        }
        if (g1 * g1 + g2 * g2).sqrt() < grad_eps {
            return Ok(PlattCalibration { a, b });
        }
        if iter == max_iter {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(h11 * g2 - h21 * g1) / det;
        let slope = g1 * da + g2 * db;
        let mut step = 1.0f64;
        loop {
            let na = a + step * da;
            let nb = b + step * db;
            let nf = platt_objective(decisions, &targets, na, nb);
            if nf < fval + 1e-4 * step * slope {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step *= 0.5;
            if step < min_step {
                return Err(SvmError::NonConvergence {
                    iterations: max_iter,
                });
            }
        }
    }
    Err(SvmError::NonConvergence {
        iterations: max_iter,
    })
}

/// `(p_waiting, p_moving)`; the pair sums to exactly 1.
pub fn predict_proba(
    model: &LinearSvmModel,
    calib: &PlattCalibration,
    x: &[f64],
) -> Result<(f64, f64), SvmError> {
    let p_moving = calib.probability(model.decision(x)?);
    Ok((1.0 - p_moving, p_moving))
}

// --- model file ---

/// On-disk model: detector configuration echo plus learned parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModelFile {
    pub descriptor: MchogParams,
    pub mhi_depth: u32,
    pub roi: RoiSpec,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub train_fingerprint: String,
}

impl SvmModelFile {
    pub fn model(&self) -> LinearSvmModel {
        LinearSvmModel {
            weights: self.weights.clone(),
            bias: self.bias,
            c_param: self.c,
        }
    }

    pub fn calibration(&self) -> PlattCalibration {
        PlattCalibration {
            a: self.platt_a,
            b: self.platt_b,
        }
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), SvmError> {
        serde_json::to_writer_pretty(out, self).map_err(|e| SvmError::BadModelFile(e.to_string()))
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, SvmError> {
        let file: Self =
            serde_json::from_reader(input).map_err(|e| SvmError::BadModelFile(e.to_string()))?;
        if file.weights.len() != crate::mchog::descriptor_length(&file.descriptor) {
            return Err(SvmError::BadModelFile(format!(
                "{} weights do not match the descriptor length {}",
                file.weights.len(),
                crate::mchog::descriptor_length(&file.descriptor)
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), SvmError> {
        let out = std::fs::File::create(path).map_err(|e| SvmError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_to(std::io::BufWriter::new(out))
    }

    pub fn load(path: &Path) -> Result<Self, SvmError> {
        let input = std::fs::File::open(path).map_err(|e| SvmError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_from(std::io::BufReader::new(input))
    }
}
