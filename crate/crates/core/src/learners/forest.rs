use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Criterion, GrowParams, Presorted, Tree};
use super::{check_class_weights, check_width, sample_weights, Dataset, LearnerError};
use crate::rng;

const BOOTSTRAP_STREAM: u64 = 0xb005;
const FEATURE_STREAM: u64 = 0xfea7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let v = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => (d as f64).log2().ceil() as usize,
            MaxFeatures::All => d,
        };
        v.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 400,
            max_depth: None,
            min_samples_split: 5,
            min_samples_leaf: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            class_weights: None,
            seed: 42,
        }
    }
}

/// Bagged Gini trees; probabilities average the leaf class proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub k: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

pub fn train_random_forest(d: &Dataset, cfg: &ForestConfig) -> Result<ForestModel, LearnerError> {
    if d.n() == 0 {
        return Err(LearnerError::Shape("empty dataset".into()));
    }
    if cfg.n_estimators == 0 || cfg.min_samples_leaf == 0 {
        return Err(LearnerError::Config("n_estimators and min_samples_leaf must be positive".into()));
    }
    d.require_two_classes()?;
    check_class_weights(cfg.class_weights.as_deref(), d.k)?;
    let sorted = Presorted::new(d.x.view());
    let weights = sample_weights(&d.y, cfg.class_weights.as_deref());
    let n_feat = cfg.max_features.resolve(d.d());
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split as f64,
        min_samples_leaf: cfg.min_samples_leaf as f64,
    };
    let trees = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut count = vec![0.0; d.n()];
            if cfg.bootstrap {
                let mut r = rng::stream(cfg.seed, BOOTSTRAP_STREAM, t as u64);
                for _ in 0..d.n() {
                    count[r.random_range(0..d.n())] += 1.0;
                }
            } else {
                count.fill(1.0);
            }
            let mut stats = vec![0.0; d.n() * d.k];
            for (i, &c) in d.y.iter().enumerate() {
                stats[i * d.k + c] = count[i] * weights[i];
            }
            let tree_seed = rng::derive_seed(cfg.seed, FEATURE_STREAM, t as u64);
            let mut features = |node: usize| {
                if n_feat >= d.d() {
                    return None;
                }
                let mut r = rng::stream(tree_seed, node as u64, 0);
                let mut mask = vec![false; d.d()];
                for f in sample(&mut r, d.d(), n_feat) {
                    mask[f] = true;
                }
                Some(mask)
            };
            grow(
                d.x.view(),
                &sorted,
                &count,
                &stats,
                Criterion::Gini { classes: d.k },
                params,
                &mut features,
            )
        })
        .collect();
    Ok(ForestModel {
        config: cfg.clone(),
        k: d.k,
        n_features: d.d(),
        trees,
    })
}

impl ForestModel {
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        check_width(x, self.n_features)?;
        let mut out = Array2::zeros((x.nrows(), self.k));
        let scale = 1.0 / self.trees.len() as f64;
        for (i, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            for t in &self.trees {
                for (c, v) in t.leaf_value(&row).iter().enumerate() {
                    out[[i, c]] += v * scale;
                }
            }
        }
        Ok(out)
    }

    /// Total Gini decrease per feature, normalized to sum to 1.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_features];
        for t in &self.trees {
            t.add_gains(&mut g);
        }
        normalize(g)
    }
}

pub(crate) fn normalize(mut g: Vec<f64>) -> Vec<f64> {
    let s: f64 = g.iter().sum();
    if s > 0.0 {
        g.iter_mut().for_each(|v| *v /= s);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Address;

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut r = rng::rng_from(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 3;
            for j in 0..5 {
                let centre = if j == c { 3.0 } else { 0.0 };
                rows.push(centre + r.random_range(-1.0..1.0));
            }
            y.push(c);
        }
        let x = Array2::from_shape_vec((n, 5), rows).unwrap();
        let addrs = (0..n).map(|i| Address::from_tag(2, i as u64)).collect();
        Dataset::new(x, y, addrs, 3).unwrap()
    }

    #[test]
    fn resolves_feature_counts() {
        assert_eq!(MaxFeatures::Sqrt.resolve(68), 9);
        assert_eq!(MaxFeatures::Log2.resolve(68), 7);
    }

    #[test]
    fn fits_and_is_deterministic() {
        let d = blobs(150, 1);
        let cfg = ForestConfig {
            n_estimators: 25,
            ..ForestConfig::default()
        };
        let a = train_random_forest(&d, &cfg).unwrap();
        let b = train_random_forest(&d, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let p = a.predict_proba(d.x.view()).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let acc = super::super::argmax_rows(p.view())
            .iter()
            .zip(&d.y)
            .filter(|(a, b)| a == b)
            .count();
        assert!(acc as f64 / d.n() as f64 > 0.95);
    }

    #[test]
    fn single_pure_tree_gives_one_hot() {
        let d = blobs(60, 2);
        let cfg = ForestConfig {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            min_samples_split: 2,
            min_samples_leaf: 1,
            ..ForestConfig::default()
        };
        let m = train_random_forest(&d, &cfg).unwrap();
        let p = m.predict_proba(d.x.view()).unwrap();
        for (i, row) in p.rows().into_iter().enumerate() {
            assert_eq!(row[d.y[i]], 1.0);
        }
    }
}
