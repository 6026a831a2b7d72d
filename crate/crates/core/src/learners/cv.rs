use serde::{Deserialize, Serialize};

use super::{
    argmax_rows, Dataset, ForestConfig, GbmConfig, LearnerError, LogRegConfig, MaxFeatures, MlpConfig, Model, Penalty,
    TrainConfig,
};
use crate::eval::macro_f1;
use crate::rng;

const FOLD_STREAM: u64 = 0xf01d;

/// Test indices of each of `k` stratified folds. Each class is shuffled and
/// dealt round-robin, continuing the deal position across classes.
pub fn stratified_folds(y: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, LearnerError> {
    if k < 2 {
        return Err(LearnerError::Fold(format!("need at least 2 folds, got {k}")));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &c) in y.iter().enumerate() {
        members[c].push(i);
    }
    if let Some((c, m)) = members.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < k) {
        return Err(LearnerError::Fold(format!("class {c} has {} rows for {k} folds", m.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut pos = 0;
    for (c, m) in members.iter().enumerate() {
        let mut r = rng::stream(seed, FOLD_STREAM, c as u64);
        for o in rng::shuffled(m.len(), &mut r) {
            folds[pos % k].push(m[o]);
            pos += 1;
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub config: TrainConfig,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best: TrainConfig,
    pub best_index: usize,
    /// Refit of `best` on the whole dataset.
    pub model: Model,
    pub rows: Vec<CvRow>,
}

/// Mean validation macro-F1 per configuration; ties keep the earlier entry.
pub fn grid_search_cv(d: &Dataset, grid: &[TrainConfig], k: usize, seed: u64) -> Result<CvResult, LearnerError> {
    if grid.is_empty() {
        return Err(LearnerError::Config("empty grid".into()));
    }
    let folds = stratified_folds(&d.y, k, seed)?;
    let mut rows = Vec::with_capacity(grid.len());
    for cfg in grid {
        let mut scores = Vec::with_capacity(k);
        for test in &folds {
            let mut in_test = vec![false; d.n()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..d.n()).filter(|&i| !in_test[i]).collect();
            let model = cfg.train(&d.subset(&train))?;
            let held = d.subset(test);
            let pred = argmax_rows(model.predict_proba(held.x.view())?.view());
            scores.push(macro_f1(&held.y, &pred, d.k).map_err(|e| LearnerError::Numeric(e.to_string()))?);
        }
        let mean = scores.iter().sum::<f64>() / k as f64;
        rows.push(CvRow {
            config: cfg.clone(),
            fold_scores: scores,
            mean,
        });
    }
    let mut best_index = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.mean > rows[best_index].mean {
            best_index = i;
        }
    }
    let best = grid[best_index].clone();
    let model = best.train(d)?;
    Ok(CvResult {
        best,
        best_index,
        model,
        rows,
    })
}

/// Search grid for a model kind (`logreg`, `rf`, `gbm`, `mlp`).
pub fn search_grid(kind: &str) -> Option<Vec<TrainConfig>> {
    let mut grid = Vec::new();
    match kind {
        "logreg" => {
            for c in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
                for penalty in [Penalty::L1, Penalty::L2] {
                    grid.push(TrainConfig::Logreg(LogRegConfig {
                        c,
                        penalty,
                        ..LogRegConfig::default()
                    }));
                }
            }
        }
        "rf" => {
            for n_estimators in [100, 400] {
                for min_samples_split in [2, 5, 10] {
                    for min_samples_leaf in [2, 5] {
                        for max_features in [MaxFeatures::Sqrt, MaxFeatures::Log2] {
                            grid.push(TrainConfig::Rf(ForestConfig {
                                n_estimators,
                                min_samples_split,
                                min_samples_leaf,
                                max_features,
                                ..ForestConfig::default()
                            }));
                        }
                    }
                }
            }
        }
        "gbm" => {
            for n_rounds in [100, 200] {
                for learning_rate in [0.1, 0.3] {
                    for max_depth in [3, 6, 9] {
                        grid.push(TrainConfig::Gbm(GbmConfig {
                            n_rounds,
                            learning_rate,
                            max_depth,
                            ..GbmConfig::default()
                        }));
                    }
                }
            }
        }
        "mlp" => {
            for learning_rate in [1e-3, 1e-2] {
                for dropout in [0.0, 0.2] {
                    grid.push(TrainConfig::Mlp(MlpConfig {
                        learning_rate,
                        dropout,
                        ..MlpConfig::default()
                    }));
                }
            }
        }
        _ => return None,
    }
    Some(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_cover() {
        let y: Vec<usize> = (0..103).map(|i| if i < 50 { 0 } else if i < 87 { 1 } else { 2 }).collect();
        let folds = stratified_folds(&y, 5, 42).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for f in &folds {
            for (c, total) in [(0, 50.0), (1, 37.0), (2, 16.0)] {
                let got = f.iter().filter(|&&i| y[i] == c).count() as f64;
                assert!((got - total / 5.0).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn small_class_is_a_fold_error() {
        assert!(matches!(stratified_folds(&[0, 0, 0, 0, 0, 1], 5, 1), Err(LearnerError::Fold(_))));
    }

    #[test]
    fn logreg_grid_has_ten_rows() {
        assert_eq!(search_grid("logreg").unwrap().len(), 10);
        assert!(search_grid("svm").is_none());
    }
}
