use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::normalize;
use super::tree::{grow, Criterion, GrowParams, Presorted, Tree};
use super::{
    check_class_weights, check_width, sample_weights, softmax_rows, weighted_cross_entropy, Dataset, LearnerError,
};
use crate::rng;

const ROW_STREAM: u64 = 0x5b5a;
const COL_STREAM: u64 = 0xc015;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub lambda: f64,
    /// Minimum hessian mass per child.
    pub min_child_weight: f64,
    pub min_samples_leaf: usize,
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 9,
            subsample: 0.8,
            colsample: 0.8,
            lambda: 1.0,
            min_child_weight: 1.0,
            min_samples_leaf: 1,
            class_weights: None,
            seed: 42,
        }
    }
}

/// Softmax booster: logit_k(x) = base_score_k + Σ_m trees[m][k](x). Leaf
/// values already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub config: GbmConfig,
    pub k: usize,
    pub n_features: usize,
    pub base_score: Vec<f64>,
    /// Rounds × classes.
    pub trees: Vec<Vec<Tree>>,
}

pub fn train_gbm(d: &Dataset, cfg: &GbmConfig) -> Result<GbmModel, LearnerError> {
    Ok(train_gbm_traced(d, cfg)?.0)
}

/// Trains and also returns the training cross-entropy before the first round
/// and after every round.
pub fn train_gbm_traced(d: &Dataset, cfg: &GbmConfig) -> Result<(GbmModel, Vec<f64>), LearnerError> {
    if d.n() == 0 {
        return Err(LearnerError::Shape("empty dataset".into()));
    }
    if !(cfg.subsample > 0.0 && cfg.subsample <= 1.0 && cfg.colsample > 0.0 && cfg.colsample <= 1.0) {
        return Err(LearnerError::Config("subsample and colsample must lie in (0, 1]".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) || !(cfg.lambda >= 0.0) {
        return Err(LearnerError::Config("learning rate must be positive and lambda non-negative".into()));
    }
    check_class_weights(cfg.class_weights.as_deref(), d.k)?;
    d.require_two_classes()?;
    let (n, k, dim) = (d.n(), d.k, d.d());
    let w = sample_weights(&d.y, cfg.class_weights.as_deref());
    let mass: f64 = w.iter().sum();
    let mut prior = vec![0.0; k];
    for (i, &c) in d.y.iter().enumerate() {
        prior[c] += w[i] / mass;
    }
    let base_score: Vec<f64> = prior.iter().map(|p| p.max(1e-12).ln()).collect();

    let sorted = Presorted::new(d.x.view());
    let mut logits = Array2::from_shape_fn((n, k), |(_, c)| base_score[c]);
    let params = GrowParams {
        max_depth: Some(cfg.max_depth),
        min_samples_split: 2.0 * cfg.min_samples_leaf as f64,
        min_samples_leaf: cfg.min_samples_leaf as f64,
    };
    let criterion = Criterion::Newton {
        lambda: cfg.lambda,
        min_child_weight: cfg.min_child_weight,
    };
    let rows_per_round = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
    let cols_per_tree = ((cfg.colsample * dim as f64).round() as usize).clamp(1, dim);

    let mut trace = Vec::with_capacity(cfg.n_rounds + 1);
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    let mut probs = logits.clone();
    softmax_rows(&mut probs);
    trace.push(weighted_cross_entropy(probs.view(), &d.y, Some(&w))?);
    for round in 0..cfg.n_rounds {
        let mut count = vec![0.0; n];
        if rows_per_round == n {
            count.fill(1.0);
        } else {
            let mut r = rng::stream(cfg.seed, ROW_STREAM, round as u64);
            for i in sample(&mut r, n, rows_per_round) {
                count[i] = 1.0;
            }
        }
        let round_trees: Vec<Tree> = (0..k)
            .into_par_iter()
            .map(|c| {
                let mut stats = vec![0.0; 2 * n];
                for i in 0..n {
                    let p = probs[[i, c]];
                    let y = (d.y[i] == c) as u8 as f64;
                    stats[2 * i] = w[i] * (p - y);
                    stats[2 * i + 1] = w[i] * p * (1.0 - p);
                }
                let mask = (cols_per_tree < dim).then(|| {
                    let mut r = rng::stream(cfg.seed, COL_STREAM, (round * k + c) as u64);
                    let mut m = vec![false; dim];
                    for f in sample(&mut r, dim, cols_per_tree) {
                        m[f] = true;
                    }
                    m
                });
                let mut tree = grow(
                    d.x.view(),
                    &sorted,
                    &count,
                    &stats,
                    criterion,
                    params,
                    &mut |_| mask.clone(),
                );
                for node in tree.nodes.iter_mut() {
                    node.value[0] *= cfg.learning_rate;
                }
                tree
            })
            .collect();
        for (i, row) in d.x.rows().into_iter().enumerate() {
            let row = row.as_slice().expect("standard layout");
            for (c, t) in round_trees.iter().enumerate() {
                logits[[i, c]] += t.leaf_value(row)[0];
            }
        }
        probs.assign(&logits);
        softmax_rows(&mut probs);
        let loss = weighted_cross_entropy(probs.view(), &d.y, Some(&w))?;
        if !loss.is_finite() {
            return Err(LearnerError::Divergence(format!("round {round} loss {loss}")));
        }
        trace.push(loss);
        trees.push(round_trees);
    }
    Ok((
        GbmModel {
            config: cfg.clone(),
            k,
            n_features: dim,
            base_score,
            trees,
        },
        trace,
    ))
}

impl GbmModel {
    pub fn decision_function(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        check_width(x, self.n_features)?;
        let mut out = Array2::from_shape_fn((x.nrows(), self.k), |(_, c)| self.base_score[c]);
        for (i, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            for round in &self.trees {
                for (c, t) in round.iter().enumerate() {
                    out[[i, c]] += t.leaf_value(&row)[0];
                }
            }
        }
        Ok(out)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        let mut z = self.decision_function(x)?;
        softmax_rows(&mut z);
        Ok(z)
    }

    /// Total split gain per feature over all trees, normalized to sum to 1.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_features];
        for round in &self.trees {
            for t in round {
                t.add_gains(&mut g);
            }
        }
        normalize(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Address;
    use crate::learners::argmax_rows;

    fn separable() -> Dataset {
        let n = 60;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| if j == 1 { (i % 3) as f64 * 10.0 } else { (i * 7 % 5) as f64 });
        let y = (0..n).map(|i| i % 3).collect();
        let addrs = (0..n).map(|i| Address::from_tag(3, i as u64)).collect();
        Dataset::new(x, y, addrs, 3).unwrap()
    }

    #[test]
    fn predictive_feature_depth_one() {
        let d = separable();
        let cfg = GbmConfig {
            n_rounds: 50,
            max_depth: 1,
            subsample: 1.0,
            colsample: 1.0,
            ..GbmConfig::default()
        };
        let m = train_gbm(&d, &cfg).unwrap();
        assert_eq!(argmax_rows(m.predict_proba(d.x.view()).unwrap().view()), d.y);
    }

    #[test]
    fn zero_rounds_give_priors() {
        let mut d = separable();
        d.y[0] = 1;
        let cfg = GbmConfig {
            n_rounds: 0,
            ..GbmConfig::default()
        };
        let m = train_gbm(&d, &cfg).unwrap();
        let p = m.predict_proba(d.x.view()).unwrap();
        let counts = d.class_counts();
        for c in 0..3 {
            assert!((p[[5, c]] - counts[c] as f64 / 60.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_monotone_without_sampling() {
        let d = separable();
        let cfg = GbmConfig {
            n_rounds: 30,
            subsample: 1.0,
            colsample: 1.0,
            ..GbmConfig::default()
        };
        let (_, trace) = train_gbm_traced(&d, &cfg).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
