//! Classifiers, metrics, cross-validation and ablation.
//!
//! `Fake` is the positive class throughout.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Dataset, Label, NewsArticle};
use crate::features::{build_matrix, combo_name, Block, EvidenceStore, FeatureError, FeatureMatrix, FeatureSchema, TfidfConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("non-finite feature at row {row}, column `{column}`")]
    NonFiniteFeature { row: usize, column: String },
    #[error("label `unknown` at row {0}")]
    UnknownLabel(usize),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn is_fake(l: Label) -> bool {
    l == Label::Fake
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    /// No positive predictions; precision reported as 0.
    UndefinedPrecision,
    /// No positive gold labels; recall reported as 0.
    UndefinedRecall,
    /// Precision and recall both zero; F1 reported as 0.
    UndefinedF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub counts: ConfusionCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<MetricFlag>,
}

impl EvalReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let mut flags = Vec::new();
        let ratio = |num: usize, den: usize, flag: MetricFlag, flags: &mut Vec<MetricFlag>| {
            if den == 0 {
                flags.push(flag);
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(counts.tp, counts.tp + counts.fp, MetricFlag::UndefinedPrecision, &mut flags);
        let recall = ratio(counts.tp, counts.tp + counts.fn_, MetricFlag::UndefinedRecall, &mut flags);
        let f1 = if precision + recall == 0.0 {
            flags.push(MetricFlag::UndefinedF1);
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let total = counts.total();
        EvalReport {
            precision,
            recall,
            f1,
            accuracy: if total == 0 {
                0.0
            } else {
                (counts.tp + counts.tn) as f64 / total as f64
            },
            counts,
            flags,
        }
    }
}

pub fn evaluate_predictions(gold: &[Label], predicted: &[Label]) -> Result<EvalReport, ModelError> {
    if gold.len() != predicted.len() {
        return Err(ModelError::LengthMismatch {
            left: gold.len(),
            right: predicted.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (i, (&g, &p)) in gold.iter().zip(predicted).enumerate() {
        if g == Label::Unknown {
            return Err(ModelError::UnknownLabel(i));
        }
        match (is_fake(g), is_fake(p)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(EvalReport::from_counts(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    /// Gradient-boosted decision stumps.
    #[default]
    Boosted,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "logreg" | "lr" => Ok(ModelKind::Logistic),
            "boosted" | "gbdt" | "xgboost" | "stumps" => Ok(ModelKind::Boosted),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Boosted => "boosted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Boosted,
            l2: 1.0,
            tolerance: 1e-6,
            max_iter: 1000,
            rounds: 200,
            learning_rate: 0.1,
            max_bins: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn logistic() -> Self {
        TrainConfig {
            kind: ModelKind::Logistic,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_owned()));
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_bins < 2 {
            return bad("max_bins must be at least 2");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    fn apply(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic {
        mean: Vec<f64>,
        scale: Vec<f64>,
        weights: Vec<f64>,
        intercept: f64,
        converged: bool,
        iterations: usize,
    },
    Boosted {
        base_score: f64,
        stumps: Vec<Stump>,
        gains: Vec<f64>,
    },
}

/// A fitted classifier together with the column layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_fingerprint: Option<String>,
    pub config: TrainConfig,
    pub params: ModelParams,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn margin(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Logistic {
                mean,
                scale,
                weights,
                intercept,
                ..
            } => {
                intercept
                    + x.iter()
                        .zip(mean)
                        .zip(scale)
                        .zip(weights)
                        .map(|(((x, m), s), w)| w * (x - m) / s)
                        .sum::<f64>()
            }
            ModelParams::Boosted {
                base_score, stumps, ..
            } => base_score + stumps.iter().map(|s| s.apply(x)).sum::<f64>(),
        }
    }

    /// Probability that the row is fake.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }

    pub fn predict_row(&self, row: &[f64]) -> Label {
        if self.predict_proba(row) >= 0.5 {
            Label::Fake
        } else {
            Label::Legit
        }
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<Label>, ModelError> {
        self.check_schema(m)?;
        Ok(m.rows.iter().map(|r| self.predict_row(r)).collect())
    }

    fn check_schema(&self, m: &FeatureMatrix) -> Result<(), ModelError> {
        if m.names != self.feature_names {
            let first = m
                .names
                .iter()
                .zip(&self.feature_names)
                .position(|(a, b)| a != b)
                .unwrap_or(m.names.len().min(self.feature_names.len()));
            return Err(ModelError::SchemaMismatch(format!(
                "model has {} features, input has {} (first difference at column {first})",
                self.feature_names.len(),
                m.names.len()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let body = serde_json::to_string_pretty(self).expect("model serializes");
        fs::write(path, body).map_err(|e| ModelError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let io = |message: String| ModelError::Io {
            path: path.to_owned(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
        let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        serde_json::from_value(value).map_err(|e| io(e.to_string()))
    }
}

fn check_training_data(m: &FeatureMatrix, labels: &[Label]) -> Result<Vec<f64>, ModelError> {
    if m.rows.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            left: m.rows.len(),
            right: labels.len(),
        });
    }
    if labels.len() < 2 {
        return Err(ModelError::TooFewSamples {
            got: labels.len(),
            min: 2,
        });
    }
    for (r, row) in m.rows.iter().enumerate() {
        if row.len() != m.names.len() {
            return Err(ModelError::SchemaMismatch(format!("row {r} has {} values", row.len())));
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteFeature {
                row: r,
                column: m.names[c].clone(),
            });
        }
    }
    let mut y = Vec::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        match l {
            Label::Unknown => return Err(ModelError::UnknownLabel(i)),
            l => y.push(if is_fake(l) { 1.0 } else { 0.0 }),
        }
    }
    let pos = y.iter().filter(|v| **v == 1.0).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::DegenerateLabels);
    }
    Ok(y)
}

pub fn train(m: &FeatureMatrix, labels: &[Label], cfg: &TrainConfig) -> Result<TrainedModel, ModelError> {
    cfg.validate()?;
    let y = check_training_data(m, labels)?;
    let params = match cfg.kind {
        ModelKind::Logistic => train_logistic(&m.rows, &y, cfg),
        ModelKind::Boosted => train_boosted(&m.rows, &y, m.names.len(), cfg),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: cfg.kind,
        feature_names: m.names.clone(),
        schema_fingerprint: None,
        config: cfg.clone(),
        params,
    })
}

pub fn evaluate(model: &TrainedModel, m: &FeatureMatrix, labels: &[Label]) -> Result<EvalReport, ModelError> {
    let pred = model.predict(m)?;
    evaluate_predictions(labels, &pred)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory BFGS with a backtracking Armijo line search.
/// Returns the minimizer, whether `||grad|| < tol` was reached, and the
/// iteration count.
pub fn lbfgs_minimize<F>(f: F, x0: Vec<f64>, tol: f64, max_iter: usize, memory: usize) -> (Vec<f64>, bool, usize)
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for iter in 0..max_iter {
        if norm(&g) < tol {
            return (x, true, iter);
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
            d.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = norm(&g);
            d.iter_mut().for_each(|v| *v /= gn.max(1.0));
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - beta) * sj;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                x_new[j] = x[j] + step * d[j];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new <= fx + 1e-4 * step * slope {
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return (x, norm(&g) < tol, iter);
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        if dot(&s, &yv) > 1e-12 {
            if s_hist.len() == memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
        }
    }
    let ok = norm(&g) < tol;
    (x, ok, max_iter)
}

fn train_logistic(rows: &[Vec<f64>], y: &[f64], cfg: &TrainConfig) -> ModelParams {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            scale[j] += (r[j] - mean[j]).powi(2);
        }
    }
    let scale: Vec<f64> = scale
        .into_iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - mean[j]) / scale[j]).collect())
        .collect();
    let nf = n as f64;
    let l2 = cfg.l2;
    // params = [w_0..w_{d-1}, b]; mean log-loss plus (l2 / 2n)||w||^2
    let objective = |p: &[f64], grad: &mut [f64]| -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (w, b) = (&p[..d], p[d]);
        let mut loss = 0.0;
        for (zi, &yi) in z.iter().zip(y) {
            let m = dot(w, zi) + b;
            loss += softplus(m) - yi * m;
            let r = sigmoid(m) - yi;
            for (g, x) in grad[..d].iter_mut().zip(zi) {
                *g += r * x;
            }
            grad[d] += r;
        }
        let mut reg = 0.0;
        for j in 0..d {
            reg += w[j] * w[j];
            grad[j] = grad[j] / nf + l2 * w[j] / nf;
        }
        grad[d] /= nf;
        loss / nf + 0.5 * l2 * reg / nf
    };
    let (p, converged, iterations) = lbfgs_minimize(objective, vec![0.0; d + 1], cfg.tolerance, cfg.max_iter, 10);
    ModelParams::Logistic {
        mean,
        scale,
        weights: p[..d].to_vec(),
        intercept: p[d],
        converged,
        iterations,
    }
}

struct BinnedColumn {
    thresholds: Vec<f64>,
    default_bin: usize,
    /// (row, bin) for rows outside the default bin.
    entries: Vec<(u32, u16)>,
}

fn bin_column(rows: &[Vec<f64>], j: usize, max_bins: usize) -> BinnedColumn {
    let mut vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals.dedup();
    let thresholds: Vec<f64> = if vals.len() <= max_bins {
        vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    } else {
        let mut all: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        all.sort_by(|a, b| a.total_cmp(b));
        let mut t: Vec<f64> = (1..max_bins)
            .map(|q| {
                let i = q * all.len() / max_bins;
                let (lo, hi) = (all[i.saturating_sub(1)], all[i]);
                0.5 * (lo + hi)
            })
            .collect();
        t.dedup();
        t
    };
    let bins: Vec<usize> = rows
        .iter()
        .map(|r| thresholds.partition_point(|&t| t < r[j]))
        .collect();
    let mut counts = vec![0usize; thresholds.len() + 1];
    for &b in &bins {
        counts[b] += 1;
    }
    let default_bin = (0..counts.len()).max_by_key(|&b| (counts[b], usize::MAX - b)).unwrap_or(0);
    let entries = bins
        .iter()
        .enumerate()
        .filter(|(_, &b)| b != default_bin)
        .map(|(i, &b)| (i as u32, b as u16))
        .collect();
    BinnedColumn {
        thresholds,
        default_bin,
        entries,
    }
}

const STUMP_LAMBDA: f64 = 1.0;
const MIN_CHILD_HESSIAN: f64 = 1e-3;

fn train_boosted(rows: &[Vec<f64>], y: &[f64], d: usize, cfg: &TrainConfig) -> ModelParams {
    let n = rows.len();
    let max_bins = cfg.max_bins.min(u16::MAX as usize);
    let columns: Vec<BinnedColumn> = (0..d).map(|j| bin_column(rows, j, max_bins)).collect();
    let p0 = y.iter().sum::<f64>() / n as f64;
    let base_score = (p0 / (1.0 - p0)).ln();
    let mut margin = vec![base_score; n];
    let mut stumps = Vec::with_capacity(cfg.rounds);
    let mut gains = vec![0.0; d];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut gh = Vec::new();
    let mut hh = Vec::new();
    for _ in 0..cfg.rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = p - y[i];
            h[i] = (p * (1.0 - p)).max(1e-16);
        }
        let gt: f64 = g.iter().sum();
        let ht: f64 = h.iter().sum();
        let parent = gt * gt / (ht + STUMP_LAMBDA);
        // (gain, feature, split bin, gl, hl)
        let mut best: Option<(f64, usize, usize, f64, f64)> = None;
        for (j, col) in columns.iter().enumerate() {
            let nb = col.thresholds.len() + 1;
            if nb < 2 {
                continue;
            }
            gh.clear();
            gh.resize(nb, 0.0);
            hh.clear();
            hh.resize(nb, 0.0);
            for &(r, b) in &col.entries {
                gh[b as usize] += g[r as usize];
                hh[b as usize] += h[r as usize];
            }
            gh[col.default_bin] = gt - (gh.iter().sum::<f64>() - gh[col.default_bin]);
            hh[col.default_bin] = ht - (hh.iter().sum::<f64>() - hh[col.default_bin]);
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..nb - 1 {
                gl += gh[k];
                hl += hh[k];
                let (gr, hr) = (gt - gl, ht - hl);
                if hl < MIN_CHILD_HESSIAN || hr < MIN_CHILD_HESSIAN {
                    continue;
                }
                let gain = gl * gl / (hl + STUMP_LAMBDA) + gr * gr / (hr + STUMP_LAMBDA) - parent;
                if gain > best.map_or(1e-12, |b| b.0) {
                    best = Some((gain, j, k, gl, hl));
                }
            }
        }
        let Some((gain, j, k, gl, hl)) = best else {
            break;
        };
        let (gr, hr) = (gt - gl, ht - hl);
        let stump = Stump {
            feature: j,
            threshold: columns[j].thresholds[k],
            left: -cfg.learning_rate * gl / (hl + STUMP_LAMBDA),
            right: -cfg.learning_rate * gr / (hr + STUMP_LAMBDA),
        };
        gains[j] += gain;
        for (m, r) in margin.iter_mut().zip(rows) {
            *m += stump.apply(r);
        }
        stumps.push(stump);
    }
    ModelParams::Boosted {
        base_score,
        stumps,
        gains,
    }
}

/// Per-feature importance normalized to sum to one: accumulated split gain
/// for boosted stumps, absolute standardized weight for logistic models.
pub fn feature_importance(model: &TrainedModel) -> Vec<(String, f64)> {
    let raw: Vec<f64> = match &model.params {
        ModelParams::Logistic { weights, .. } => weights.iter().map(|w| w.abs()).collect(),
        ModelParams::Boosted { gains, .. } => gains.clone(),
    };
    let total: f64 = raw.iter().sum();
    let mut out: Vec<(String, f64)> = model
        .feature_names
        .iter()
        .cloned()
        .zip(raw.into_iter().map(|v| if total > 0.0 { v / total } else { 0.0 }))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 5, seed: 0 }
    }
}

/// Test-index sets of a seeded stratified k-fold partition. Every index
/// appears in exactly one fold; per-class counts differ by at most one
/// between folds.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ModelError> {
    if k < 2 {
        return Err(ModelError::InvalidConfig("need at least 2 folds".into()));
    }
    if labels.len() < k {
        return Err(ModelError::TooFewSamples {
            got: labels.len(),
            min: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for class in [Label::Fake, Label::Legit, Label::Unknown] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (n, i) in idx.into_iter().enumerate() {
            folds[(offset + n) % k].push(i);
        }
        offset += labels.iter().filter(|&&l| l == class).count();
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub seed: u64,
}

impl CvReport {
    pub fn from_folds(folds: Vec<EvalReport>, seed: u64) -> Self {
        let col = |f: fn(&EvalReport) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
        CvReport {
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            f1: col(|r| r.f1),
            folds,
            seed,
        }
    }

    pub fn fold_f1(&self) -> Vec<f64> {
        self.folds.iter().map(|r| r.f1).collect()
    }
}

/// Runs `fold_fn(train_indices, test_indices)` for each stratified fold.
pub fn cross_validate_with<F>(labels: &[Label], cv: &CvConfig, mut fold_fn: F) -> Result<CvReport, ModelError>
where
    F: FnMut(&[usize], &[usize]) -> Result<EvalReport, ModelError>,
{
    let folds = stratified_folds(labels, cv.folds, cv.seed)?;
    let mut reports = Vec::with_capacity(folds.len());
    for test in &folds {
        let train: Vec<usize> = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
        reports.push(fold_fn(&train, test)?);
    }
    Ok(CvReport::from_folds(reports, cv.seed))
}

/// Cross-validates a fixed feature matrix.
pub fn cross_validate(
    m: &FeatureMatrix,
    labels: &[Label],
    cfg: &TrainConfig,
    cv: &CvConfig,
) -> Result<CvReport, ModelError> {
    cross_validate_with(labels, cv, |train_idx, test_idx| {
        let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
        let model = train(&m.subset(train_idx), &pick(train_idx), cfg)?;
        evaluate(&model, &m.subset(test_idx), &pick(test_idx))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestFlag {
    /// Every difference is zero.
    IdenticalSamples,
    /// Differences are constant and nonzero, so the variance is zero.
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<TTestFlag>,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest, ModelError> {
    if a.len() != b.len() {
        return Err(ModelError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(ModelError::TooFewSamples { got: a.len(), min: 2 });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let ms = mean_std(&d);
    let df = d.len() - 1;
    if ms.std == 0.0 || ms.std < 1e-15 * ms.mean.abs() {
        let (t, p, flag) = if ms.mean == 0.0 {
            (0.0, 1.0, TTestFlag::IdenticalSamples)
        } else {
            (f64::INFINITY.copysign(ms.mean), 0.0, TTestFlag::ZeroVariance)
        };
        return Ok(PairedTTest {
            mean_difference: ms.mean,
            t,
            df,
            p_value: p,
            flag: Some(flag),
        });
    }
    let t = ms.mean / (ms.std / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(PairedTTest {
        mean_difference: ms.mean,
        t,
        df,
        p_value: p,
        flag: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub combo: String,
    pub slug: String,
    pub cv: CvReport,
    pub delta_f1: f64,
    /// Paired test of this combo's fold F1 against the baseline's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub versus_baseline: Option<PairedTTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub baseline: String,
    pub model: ModelKind,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub languages: Vec<String>,
    pub top_n: usize,
    pub tfidf: TfidfConfig,
    pub train: TrainConfig,
    pub cv: CvConfig,
    /// Index of the baseline combo.
    pub baseline: usize,
    pub strict_evidence: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            languages: crate::retrieval::DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            top_n: crate::retrieval::DEFAULT_TOP_N,
            tfidf: TfidfConfig::default(),
            train: TrainConfig::default(),
            cv: CvConfig::default(),
            baseline: 0,
            strict_evidence: false,
        }
    }
}

fn subset_dataset(d: &Dataset, idx: &[usize], part: &str) -> Dataset {
    let articles: Vec<NewsArticle> = idx.iter().map(|&i| d.articles[i].clone()).collect();
    Dataset::new(format!("{}/{part}", d.name), articles).expect("subset of a valid dataset")
}

/// Cross-validates every block combination on the same folds. Schemas are
/// fit on each fold's training part only.
pub fn ablate(
    dataset: &Dataset,
    evidence: &EvidenceStore,
    combos: &[Vec<Block>],
    cfg: &AblationConfig,
) -> Result<AblationTable, ModelError> {
    if combos.is_empty() || cfg.baseline >= combos.len() {
        return Err(ModelError::InvalidConfig("baseline combo out of range".into()));
    }
    let labels: Vec<Label> = dataset.articles.iter().map(|a| a.label).collect();
    let mut reports = Vec::with_capacity(combos.len());
    for blocks in combos {
        let report = cross_validate_with(&labels, &cfg.cv, |train_idx, test_idx| {
            let train_ds = subset_dataset(dataset, train_idx, "train");
            let test_ds = subset_dataset(dataset, test_idx, "test");
            let mut schema = FeatureSchema::new(blocks.clone(), cfg.languages.clone(), cfg.top_n).with_tfidf(cfg.tfidf);
            schema.fit_dataset(&train_ds)?;
            let (xtr, ytr) = build_matrix(&train_ds, &schema, evidence, cfg.strict_evidence)?;
            let (xte, yte) = build_matrix(&test_ds, &schema, evidence, cfg.strict_evidence)?;
            let model = train(&xtr, &ytr, &cfg.train)?;
            evaluate(&model, &xte, &yte)
        })?;
        reports.push(report);
    }
    let base_f1 = reports[cfg.baseline].fold_f1();
    let base_mean = reports[cfg.baseline].f1.mean;
    let rows = combos
        .iter()
        .zip(reports)
        .enumerate()
        .map(|(i, (blocks, cv))| {
            let versus_baseline = if i == cfg.baseline {
                None
            } else {
                paired_t_test(&cv.fold_f1(), &base_f1).ok()
            };
            AblationRow {
                combo: combo_name(blocks),
                slug: blocks.iter().map(|b| b.slug()).collect::<Vec<_>>().join("+"),
                delta_f1: cv.f1.mean - base_mean,
                cv,
                versus_baseline,
            }
        })
        .collect();
    Ok(AblationTable {
        baseline: combo_name(&combos[cfg.baseline]),
        model: cfg.train.kind,
        rows,
    })
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("combo,precision,recall,f1,f1_std,delta_f1,t,p_value\n");
        for r in &self.rows {
            let (t, p) = r
                .versus_baseline
                .as_ref()
                .map_or((String::new(), String::new()), |t| (format!("{}", t.t), format!("{}", t.p_value)));
            let combo = if r.combo.contains(',') || r.combo.contains('"') {
                format!("\"{}\"", r.combo.replace('"', "\"\""))
            } else {
                r.combo.clone()
            };
            out.push_str(&format!(
                "{combo},{:.4},{:.4},{:.4},{:.4},{:.4},{t},{p}\n",
                r.cv.precision.mean, r.cv.recall.mean, r.cv.f1.mean, r.cv.f1.std, r.delta_f1
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Features | Precision | Recall | F1 | ΔF1 | p |\n|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let p = r
                .versus_baseline
                .as_ref()
                .map_or("--".to_owned(), |t| format!("{:.4}", t.p_value));
            out.push_str(&format!(
                "| {} | {:.3} | {:.3} | {:.3} ± {:.3} | {:+.3} | {p} |\n",
                r.combo, r.cv.precision.mean, r.cv.recall.mean, r.cv.f1.mean, r.cv.f1.std, r.delta_f1
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Legit};

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let d = rows[0].len();
        FeatureMatrix {
            names: (0..d).map(|j| format!("f{j}")).collect(),
            rows,
            ids: Vec::new(),
        }
    }

    #[test]
    fn metrics_basic() {
        let r = evaluate_predictions(&[Fake, Fake, Legit, Legit], &[Fake, Legit, Fake, Legit]).unwrap();
        assert_eq!(r.counts, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert!(r.flags.is_empty());
    }

    #[test]
    fn metrics_zero_denominators() {
        let r = evaluate_predictions(&[Legit, Legit], &[Legit, Legit]).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(
            r.flags,
            [MetricFlag::UndefinedPrecision, MetricFlag::UndefinedRecall, MetricFlag::UndefinedF1]
        );
        assert!(matches!(
            evaluate_predictions(&[Fake], &[]),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn training_guards() {
        let m = matrix(vec![vec![0.0], vec![1.0]]);
        assert!(matches!(train(&m, &[Fake, Fake], &TrainConfig::default()), Err(ModelError::DegenerateLabels)));
        assert!(matches!(
            train(&m, &[Fake, Label::Unknown], &TrainConfig::default()),
            Err(ModelError::UnknownLabel(1))
        ));
        let bad = matrix(vec![vec![f64::NAN], vec![1.0]]);
        assert!(matches!(
            train(&bad, &[Fake, Legit], &TrainConfig::default()),
            Err(ModelError::NonFiniteFeature { row: 0, .. })
        ));
        let one = matrix(vec![vec![1.0]]);
        assert!(matches!(train(&one, &[Fake], &TrainConfig::default()), Err(ModelError::TooFewSamples { .. })));
    }

    fn separable() -> (FeatureMatrix, Vec<Label>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let x = i as f64 / 40.0;
            rows.push(vec![x, (i % 3) as f64]);
            labels.push(if x > 0.5 { Fake } else { Legit });
        }
        (matrix(rows), labels)
    }

    #[test]
    fn both_learners_fit_separable_data() {
        let (m, y) = separable();
        for cfg in [TrainConfig::default(), TrainConfig::logistic()] {
            let model = train(&m, &y, &cfg).unwrap();
            let r = evaluate(&model, &m, &y).unwrap();
            assert!(r.accuracy >= 0.95, "{:?} {}", cfg.kind, r.accuracy);
            let imp = feature_importance(&model);
            assert_eq!(imp[0].0, "f0");
            assert!((imp.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn logistic_converges() {
        let (m, y) = separable();
        let model = train(&m, &y, &TrainConfig::logistic()).unwrap();
        let ModelParams::Logistic { converged, .. } = model.params else { panic!() };
        assert!(converged);
    }

    #[test]
    fn lbfgs_quadratic() {
        let (x, ok, _) = lbfgs_minimize(
            |p, g| {
                g[0] = 2.0 * (p[0] - 3.0);
                g[1] = 20.0 * (p[1] + 1.0);
                (p[0] - 3.0).powi(2) + 10.0 * (p[1] + 1.0).powi(2)
            },
            vec![0.0, 0.0],
            1e-10,
            200,
            5,
        );
        assert!(ok);
        assert!((x[0] - 3.0).abs() < 1e-8 && (x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn schema_mismatch() {
        let (m, y) = separable();
        let model = train(&m, &y, &TrainConfig::default()).unwrap();
        let mut other = m.clone();
        other.names[1] = "g".into();
        assert!(matches!(evaluate(&model, &other, &y), Err(ModelError::SchemaMismatch(_))));
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<Label> = (0..23).map(|i| if i % 3 == 0 { Fake } else { Legit }).collect();
        let folds = stratified_folds(&labels, 5, 9).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let fakes: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == Fake).count()).collect();
        assert!(fakes.iter().max().unwrap() - fakes.iter().min().unwrap() <= 1);
        assert_eq!(folds, stratified_folds(&labels, 5, 9).unwrap());
    }

    #[test]
    fn t_test_conventions() {
        let t = paired_t_test(&[0.5, 0.6], &[0.5, 0.6]).unwrap();
        assert_eq!((t.t, t.p_value, t.flag), (0.0, 1.0, Some(TTestFlag::IdenticalSamples)));
        let t = paired_t_test(&[0.6, 0.7, 0.8], &[0.5, 0.6, 0.7]).unwrap();
        assert_eq!(t.p_value, 0.0);
        assert!(t.t.is_infinite() && t.t > 0.0);
        assert_eq!(t.flag, Some(TTestFlag::ZeroVariance));
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn model_round_trip() {
        let (m, y) = separable();
        let model = train(&m, &y, &TrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        assert_eq!(TrainedModel::load(&path).unwrap(), model);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v["format_version"] = 99.into();
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(TrainedModel::load(&path), Err(ModelError::UnsupportedVersion(99))));
    }
}
