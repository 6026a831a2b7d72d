mod common;

use proptest::prelude::*;
use stableaml::learners::{
    argmax_rows, grid_search_cv, load_model, search_grid, save_model, Dataset, ForestConfig, GbmConfig, LogRegConfig,
    MaxFeatures, MlpConfig, ModelArtifact, SavedModel, TrainConfig,
};

fn quick_configs(seed: u64) -> Vec<TrainConfig> {
    vec![
        TrainConfig::Logreg(LogRegConfig {
            c: 1.0,
            ..LogRegConfig::default()
        }),
        TrainConfig::Rf(ForestConfig {
            n_estimators: 12,
            seed,
            ..ForestConfig::default()
        }),
        TrainConfig::Gbm(GbmConfig {
            n_rounds: 8,
            max_depth: 4,
            seed,
            ..GbmConfig::default()
        }),
        TrainConfig::Mlp(MlpConfig {
            hidden: vec![16, 8],
            max_epochs: 5,
            batch_size: 32,
            seed,
            ..MlpConfig::default()
        }),
    ]
}

fn scaled(d: &Dataset, col: usize, factor: f64) -> Dataset {
    let mut out = d.clone();
    out.x.column_mut(col).mapv_inplace(|v| v * factor);
    out
}

#[test]
fn every_kind_is_deterministic_and_round_trips() {
    let d = common::noisy_dataset(150, 6, 3, 1);
    for cfg in quick_configs(7) {
        let a = cfg.train(&d).unwrap();
        let b = cfg.train(&d).unwrap();
        let art = |m| ModelArtifact::new(SavedModel::Tabular(m), cfg.seed(), false, d.addresses.clone());
        let (mut bytes_a, mut bytes_b) = (Vec::new(), Vec::new());
        save_model(&art(a.clone()), &mut bytes_a).unwrap();
        save_model(&art(b), &mut bytes_b).unwrap();
        assert_eq!(bytes_a, bytes_b, "{}", a.kind());
        let loaded = load_model(bytes_a.as_slice()).unwrap();
        let SavedModel::Tabular(back) = loaded.model else { panic!("wrong family") };
        assert_eq!(
            back.predict_proba(d.x.view()).unwrap(),
            a.predict_proba(d.x.view()).unwrap(),
            "{}",
            a.kind()
        );
    }
}

#[test]
fn width_mismatch_is_reported() {
    let d = common::noisy_dataset(60, 5, 3, 2);
    let narrow = common::noisy_dataset(10, 4, 3, 2);
    for cfg in quick_configs(1) {
        let m = cfg.train(&d).unwrap();
        assert!(m.predict_proba(narrow.x.view()).is_err());
    }
}

#[test]
fn deep_forest_without_bootstrap_recalls_training_rows() {
    let d = common::noisy_dataset(120, 5, 3, 3);
    let cfg = TrainConfig::Rf(ForestConfig {
        n_estimators: 5,
        bootstrap: false,
        min_samples_split: 2,
        min_samples_leaf: 1,
        max_features: MaxFeatures::All,
        ..ForestConfig::default()
    });
    let m = cfg.train(&d).unwrap();
    assert_eq!(m.predict(d.x.view()).unwrap(), d.y);
}

#[test]
fn tree_ensembles_ignore_positive_rescaling() {
    let d = common::noisy_dataset(200, 5, 3, 4);
    let s = scaled(&d, 2, 3.7);
    for cfg in &quick_configs(5)[1..3] {
        let a = cfg.train(&d).unwrap().predict_proba(d.x.view()).unwrap();
        let b = cfg.train(&s).unwrap().predict_proba(s.x.view()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn standardized_models_ignore_positive_rescaling() {
    let d = common::noisy_dataset(200, 5, 3, 6);
    let s = scaled(&d, 1, 250.0);
    for cfg in [&quick_configs(5)[0], &quick_configs(5)[3]] {
        let a = cfg.train(&d).unwrap().predict_proba(d.x.view()).unwrap();
        let b = cfg.train(&s).unwrap().predict_proba(s.x.view()).unwrap();
        let worst = a.iter().zip(b.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "max difference {worst}");
    }
}

#[test]
fn single_entry_grid_returns_it() {
    let d = common::noisy_dataset(100, 4, 3, 8);
    let grid = vec![quick_configs(1)[2].clone()];
    let res = grid_search_cv(&d, &grid, 5, 42).unwrap();
    assert_eq!(res.best, grid[0]);
    assert_eq!(res.rows.len(), 1);
}

#[test]
fn logistic_grid_enumerates() {
    let d = common::noisy_dataset(150, 4, 3, 9);
    let res = grid_search_cv(&d, &search_grid("logreg").unwrap(), 5, 42).unwrap();
    assert!(res.rows.len() >= 8);
    assert!(res.rows.iter().all(|r| r.mean.is_finite() && r.fold_scores.len() == 5));
    let best = res.rows.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(res.rows[res.best_index].mean, best);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn outputs_lie_on_the_simplex(seed in 0u64..1000) {
        let d = common::noisy_dataset(80, 4, 3, seed);
        for cfg in quick_configs(seed) {
            let m = cfg.train(&d).unwrap();
            let p = m.predict_proba(d.x.view()).unwrap();
            for row in p.rows() {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            }
            prop_assert_eq!(m.predict(d.x.view()).unwrap(), argmax_rows(p.view()));
        }
    }
}
