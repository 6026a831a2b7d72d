//! Tabular classifiers with a shared training, prediction and serialization
//! contract: multinomial logistic regression, CART, random forest, gradient
//! boosted trees and a two-hidden-layer perceptron.

mod artifact;
mod cv;
mod forest;
mod gbm;
mod linear;
mod mlp;
mod tree;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifact::{load_model, save_model, ModelArtifact, SavedModel, ARTIFACT_MAGIC, ARTIFACT_VERSION};
pub use cv::{grid_search_cv, search_grid, stratified_folds, CvResult, CvRow};
pub use forest::{train_random_forest, ForestConfig, ForestModel, MaxFeatures};
pub use gbm::{train_gbm, train_gbm_traced, GbmConfig, GbmModel};
pub use linear::{logreg_objective, train_logreg, LinearModel, LogRegConfig, Penalty};
pub use mlp::{mlp_loss_and_grad, train_mlp, Dense, MlpConfig, MlpModel};
pub(crate) use mlp::{init_layers, Adam};
pub use tree::{gini, train_tree, Node, Split, Tree, TreeConfig};

use crate::features::{FeatureMatrix, FEATURE_COUNT};
use crate::ingest::{Address, ClassLabels};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("expected {expected} feature columns, got {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot build folds: {0}")]
    Fold(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Labeled rows: `x` is n × d, `y` holds class codes below `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub addresses: Vec<Address>,
    pub k: usize,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, addresses: Vec<Address>, k: usize) -> Result<Self, LearnerError> {
        if x.nrows() != y.len() || addresses.len() != y.len() {
            return Err(LearnerError::Shape(format!(
                "{} rows, {} labels, {} addresses",
                x.nrows(),
                y.len(),
                addresses.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= k) {
            return Err(LearnerError::Shape(format!("label {bad} not below K={k}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::Numeric("feature matrix".into()));
        }
        Ok(Dataset { x, y, addresses, k })
    }

    /// Rows of `m` that carry a ground-truth label, in address order.
    pub fn from_features(m: &FeatureMatrix, labels: &ClassLabels) -> Self {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut addresses = Vec::new();
        for (addr, v) in m.iter() {
            if let Some(class) = labels.get(addr) {
                rows.extend_from_slice(v.as_slice());
                y.push(class.code());
                addresses.push(*addr);
            }
        }
        let x = Array2::from_shape_vec((y.len(), FEATURE_COUNT), rows).expect("row width");
        Dataset { x, y, addresses, k: 3 }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            addresses: rows.iter().map(|&r| self.addresses[r]).collect(),
            k: self.k,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }

    pub(crate) fn require_two_classes(&self) -> Result<(), LearnerError> {
        if self.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
            return Err(LearnerError::DegenerateLabels);
        }
        Ok(())
    }
}

/// Per-row weights from optional per-class weights.
pub(crate) fn sample_weights(y: &[usize], class_weights: Option<&[f64]>) -> Vec<f64> {
    match class_weights {
        Some(w) => y.iter().map(|&c| w[c]).collect(),
        None => vec![1.0; y.len()],
    }
}

/// Class weights n / (K · n_c); absent classes get weight 0.
pub fn balanced_class_weights(y: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for &c in y {
        counts[c] += 1;
    }
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { y.len() as f64 / (k as f64 * c as f64) })
        .collect()
}

pub(crate) fn check_class_weights(w: Option<&[f64]>, k: usize) -> Result<(), LearnerError> {
    if let Some(w) = w {
        if w.len() != k || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LearnerError::Config(format!("class weights must be {k} non-negative numbers")));
        }
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>, LearnerError> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::Numeric(format!("softmax input {z:?}")));
    }
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

pub(crate) fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
}

/// Mean negative log-likelihood with the log clamped at 1e-12.
pub fn cross_entropy(probs: ArrayView2<f64>, y: &[usize]) -> Result<f64, LearnerError> {
    weighted_cross_entropy(probs, y, None)
}

pub(crate) fn weighted_cross_entropy(
    probs: ArrayView2<f64>,
    y: &[usize],
    weights: Option<&[f64]>,
) -> Result<f64, LearnerError> {
    if probs.nrows() != y.len() {
        return Err(LearnerError::Shape(format!("{} rows vs {} labels", probs.nrows(), y.len())));
    }
    if let Some(bad) = y.iter().find(|&&c| c >= probs.ncols()) {
        return Err(LearnerError::Shape(format!("label {bad} out of range")));
    }
    let (mut total, mut mass) = (0.0, 0.0);
    for (i, &c) in y.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        total -= w * probs[[i, c]].max(1e-12).ln();
        mass += w;
    }
    Ok(if mass > 0.0 { total / mass } else { 0.0 })
}

/// Row-wise argmax; ties go to the lowest class.
pub fn argmax_rows(probs: ArrayView2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Per-feature mean and standard deviation fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 marks a constant feature.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = vec![0.0; x.ncols()];
        let mut scale = vec![0.0; x.ncols()];
        for (j, col) in x.columns().into_iter().enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            scale[j] = if var > 1e-24 { var.sqrt() } else { 0.0 };
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.scale[j] > 0.0 {
                    (*v - self.mean[j]) / self.scale[j]
                } else {
                    0.0
                };
            }
        }
        out
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.scale[j] == 0.0
    }
}

pub(crate) fn check_width(x: ArrayView2<f64>, expected: usize) -> Result<(), LearnerError> {
    if x.ncols() != expected {
        return Err(LearnerError::WidthMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

/// Any trained tabular model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Model {
    Logreg(LinearModel),
    Rf(ForestModel),
    Gbm(GbmModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Logreg(_) => "logreg",
            Model::Rf(_) => "rf",
            Model::Gbm(_) => "gbm",
            Model::Mlp(_) => "mlp",
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Logreg(m) => m.k,
            Model::Rf(m) => m.k,
            Model::Gbm(m) => m.k,
            Model::Mlp(m) => m.k,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Logreg(m) => m.n_features(),
            Model::Rf(m) => m.n_features,
            Model::Gbm(m) => m.n_features,
            Model::Mlp(m) => m.n_features(),
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        match self {
            Model::Logreg(m) => m.predict_proba(x),
            Model::Rf(m) => m.predict_proba(x),
            Model::Gbm(m) => m.predict_proba(x),
            Model::Mlp(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, LearnerError> {
        Ok(argmax_rows(self.predict_proba(x)?.view()))
    }
}

/// Hyperparameters of any tabular model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum TrainConfig {
    Logreg(LogRegConfig),
    Rf(ForestConfig),
    Gbm(GbmConfig),
    Mlp(MlpConfig),
}

impl TrainConfig {
    pub fn train(&self, d: &Dataset) -> Result<Model, LearnerError> {
        Ok(match self {
            TrainConfig::Logreg(c) => Model::Logreg(train_logreg(d, c)?),
            TrainConfig::Rf(c) => Model::Rf(train_random_forest(d, c)?),
            TrainConfig::Gbm(c) => Model::Gbm(train_gbm(d, c)?),
            TrainConfig::Mlp(c) => Model::Mlp(train_mlp(d, c)?),
        })
    }

    pub fn seed(&self) -> u64 {
        match self {
            TrainConfig::Logreg(_) => 0,
            TrainConfig::Rf(c) => c.seed,
            TrainConfig::Gbm(c) => c.seed,
            TrainConfig::Mlp(c) => c.seed,
        }
    }

    /// Compact one-line description used in CV tables.
    pub fn label(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
