mod common;

use ndarray::Array2;
use proptest::prelude::*;
use stableaml::explain::{
    builtin_importance, class_signature_matrix, consensus_rank, ensemble_shap, permutation_importance,
    permutation_importance_with, shap_target,
};
use stableaml::learners::{
    train_gbm, train_random_forest, ForestConfig, GbmConfig, LogRegConfig, MaxFeatures, Model, TrainConfig,
};

fn small_gbm(seed: u64) -> (Model, stableaml::learners::Dataset) {
    let d = common::noisy_dataset(120, 4, 3, seed);
    let cfg = GbmConfig {
        n_rounds: 2,
        max_depth: 3,
        subsample: 0.8,
        colsample: 1.0,
        seed,
        ..GbmConfig::default()
    };
    (Model::Gbm(train_gbm(&d, &cfg).unwrap()), d)
}

fn small_rf(seed: u64) -> (Model, stableaml::learners::Dataset) {
    let d = common::noisy_dataset(120, 4, 3, seed);
    let cfg = ForestConfig {
        n_estimators: 5,
        max_depth: Some(3),
        max_features: MaxFeatures::Log2,
        seed,
        ..ForestConfig::default()
    };
    (Model::Rf(train_random_forest(&d, &cfg).unwrap()), d)
}

#[test]
fn shap_equals_brute_force_on_small_ensembles() {
    for seed in 0..4 {
        for (model, d) in [small_gbm(seed), small_rf(seed)] {
            let probe = d.x.slice(ndarray::s![..20, ..]);
            let shap = ensemble_shap(&model, probe).unwrap();
            for (i, row) in probe.rows().into_iter().enumerate() {
                let reference = common::shapley::brute_force_shap(&model, row.as_slice().unwrap());
                for c in 0..3 {
                    for f in 0..4 {
                        let got = shap.values[[i, c, f]];
                        assert!((got - reference[c][f]).abs() < 1e-9, "{} row {i} class {c} feature {f}", model.kind());
                    }
                }
            }
        }
    }
}

#[test]
fn shap_local_accuracy() {
    let d = common::noisy_dataset(500, 8, 3, 9);
    let gbm = Model::Gbm(
        train_gbm(
            &d,
            &GbmConfig {
                n_rounds: 20,
                max_depth: 5,
                ..GbmConfig::default()
            },
        )
        .unwrap(),
    );
    let rf = Model::Rf(
        train_random_forest(
            &d,
            &ForestConfig {
                n_estimators: 20,
                ..ForestConfig::default()
            },
        )
        .unwrap(),
    );
    for model in [gbm, rf] {
        let shap = ensemble_shap(&model, d.x.view()).unwrap();
        let target = shap_target(&model, d.x.view()).unwrap();
        for i in 0..d.n() {
            for c in 0..3 {
                let total: f64 = shap.base[c] + (0..8).map(|f| shap.values[[i, c, f]]).sum::<f64>();
                assert!((total - target[[i, c]]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn builtin_importance_contracts() {
    let d = common::planted_dataset(90, 5, 2, 2, 1);
    let stump = TrainConfig::Gbm(GbmConfig {
        n_rounds: 1,
        max_depth: 1,
        subsample: 1.0,
        colsample: 1.0,
        ..GbmConfig::default()
    })
    .train(&d)
    .unwrap();
    let imp = builtin_importance(&stump).unwrap();
    assert_eq!(imp[2], 1.0);
    assert!(imp.iter().enumerate().all(|(j, &v)| j == 2 || v == 0.0));

    let lr = TrainConfig::Logreg(LogRegConfig::default()).train(&d).unwrap();
    let s: f64 = builtin_importance(&lr).unwrap().iter().sum();
    assert!((s - 1.0).abs() < 1e-9);
    let mlp = TrainConfig::Mlp(stableaml::learners::MlpConfig {
        max_epochs: 1,
        ..Default::default()
    })
    .train(&d)
    .unwrap();
    assert!(builtin_importance(&mlp).is_err());
}

#[test]
fn permutation_importance_contracts() {
    let mut d = common::planted_dataset(150, 4, 1, 3, 2);
    d.x.column_mut(3).fill(7.0);
    let rf = TrainConfig::Rf(ForestConfig {
        n_estimators: 30,
        ..ForestConfig::default()
    })
    .train(&d)
    .unwrap();
    let drops = permutation_importance(&rf, d.x.view(), &d.y, 10, 3).unwrap();
    assert_eq!(drops[3], 0.0);
    assert!(drops[1] > 0.3);
    let builtin = builtin_importance(&rf).unwrap();
    for j in 0..4 {
        if builtin[j] == 0.0 {
            assert!(drops[j].abs() <= 1e-12);
        }
    }
    let single = d.x.slice(ndarray::s![..1, ..]).to_owned();
    let one = permutation_importance_with(|m| Ok(rf.predict(m)?), single.view(), &d.y[..1], 3, 10, 5).unwrap();
    assert!(one.iter().all(|&v| v == 0.0));
}

#[test]
fn planted_feature_ranks_first_and_signatures_normalize() {
    let d = common::planted_dataset(300, 6, 4, 3, 4);
    let rf = TrainConfig::Rf(ForestConfig {
        n_estimators: 40,
        ..ForestConfig::default()
    })
    .train(&d)
    .unwrap();
    let gbm = TrainConfig::Gbm(GbmConfig {
        n_rounds: 20,
        ..GbmConfig::default()
    })
    .train(&d)
    .unwrap();
    let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
    let mut cols = Vec::new();
    for (label, m) in [("rf", &rf), ("gbm", &gbm)] {
        cols.push((format!("{label}_builtin"), builtin_importance(m).unwrap()));
        cols.push((format!("{label}_perm"), permutation_importance(m, d.x.view(), &d.y, 5, 1).unwrap()));
        cols.push((format!("{label}_shap"), ensemble_shap(m, d.x.view()).unwrap().mean_abs()));
    }
    let table = consensus_rank(&names, &cols).unwrap();
    assert_eq!(table.consensus_rank[4], 1);

    let sig = class_signature_matrix(&[&rf, &gbm], d.x.view(), &d.y).unwrap();
    for c in 0..3 {
        assert!((sig.column(c).sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_feature_model_signature() {
    let d = common::planted_dataset(60, 3, 0, 3, 8);
    let m = TrainConfig::Gbm(GbmConfig {
        n_rounds: 5,
        max_depth: 2,
        subsample: 1.0,
        colsample: 1.0,
        ..GbmConfig::default()
    })
    .train(&d)
    .unwrap();
    let sig = class_signature_matrix(&[&m], d.x.view(), &d.y).unwrap();
    for c in 0..3 {
        assert!((sig[[0, c]] - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn consensus_invariant_to_monotone_rescaling(
        a in prop::collection::vec(0.0f64..1.0, 12),
        b in prop::collection::vec(0.0f64..1.0, 12),
        col in 0usize..2,
        factor in prop::sample::select(vec![10.0, 0.5, 3.0]),
    ) {
        let names: Vec<String> = (0..12).map(|j| format!("f{j}")).collect();
        let base = consensus_rank(&names, &[("a".into(), a.clone()), ("b".into(), b.clone())]).unwrap();
        let mut scaled = [a, b];
        scaled[col].iter_mut().for_each(|v| *v *= factor);
        let [sa, sb] = scaled;
        let other = consensus_rank(&names, &[("a".into(), sa), ("b".into(), sb)]).unwrap();
        prop_assert_eq!(&base.consensus_rank, &other.consensus_rank);
        let mut sorted = other.consensus_rank.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (1..=12).collect::<Vec<_>>());
    }

    #[test]
    fn shap_is_locally_accurate(seed in 0u64..500) {
        let (model, d) = small_gbm(seed);
        let x: Array2<f64> = d.x.slice(ndarray::s![..10, ..]).to_owned();
        let shap = ensemble_shap(&model, x.view()).unwrap();
        let target = shap_target(&model, x.view()).unwrap();
        for i in 0..10 {
            for c in 0..3 {
                let total = shap.base[c] + (0..4).map(|f| shap.values[[i, c, f]]).sum::<f64>();
                prop_assert!((total - target[[i, c]]).abs() < 1e-9);
            }
        }
    }
}
