use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use stableaml::eval::{
    binary_collapse, binary_report, class_names, config_hash, macro_table, per_class_table, report_from_proba,
    stratified_split, SplitSpec,
};
use stableaml::features::{read_features, FeatureMatrix};
use stableaml::gnn::{node_features, sage_predict, train_sage, SageConfig, SageGraph};
use stableaml::graph::build_graph;
use stableaml::ingest::{normalize_address, parse_transfers, parse_wallet_labels, Address};
use stableaml::learners::{
    balanced_class_weights, load_model, save_model, Dataset, ForestConfig, GbmConfig, LogRegConfig, MlpConfig,
    ModelArtifact, Penalty, SavedModel, TrainConfig,
};

use crate::args::{EvaluateArgs, ModelKind, PenaltyArg, TrainArgs, WeightMode};
use crate::error::{data, usage, CliResult};
use crate::manifest::{read_manifest, Run};

pub const MODEL_FILE: &str = "model.saml-model";
pub const SPLIT_FILE: &str = "split.csv";

pub fn model_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MODEL_FILE)
    } else {
        path.to_path_buf()
    }
}

fn tabular_config(a: &TrainArgs, seed: u64, weights: Option<Vec<f64>>) -> CliResult<TrainConfig> {
    Ok(match a.model {
        ModelKind::Logreg => {
            let mut c = LogRegConfig {
                class_weights: weights,
                ..LogRegConfig::default()
            };
            if let Some(v) = a.c {
                c.c = v;
            }
            if let Some(p) = a.penalty {
                c.penalty = match p {
                    PenaltyArg::L1 => Penalty::L1,
                    PenaltyArg::L2 => Penalty::L2,
                };
            }
            TrainConfig::Logreg(c)
        }
        ModelKind::Rf => {
            let mut c = ForestConfig {
                class_weights: weights,
                seed,
                ..ForestConfig::default()
            };
            if let Some(v) = a.n_estimators {
                c.n_estimators = v;
            }
            if a.max_depth.is_some() {
                c.max_depth = a.max_depth;
            }
            TrainConfig::Rf(c)
        }
        ModelKind::Gbm => {
            let mut c = GbmConfig {
                class_weights: weights,
                seed,
                ..GbmConfig::default()
            };
            if let Some(v) = a.n_rounds {
                c.n_rounds = v;
            }
            if let Some(v) = a.max_depth {
                c.max_depth = v;
            }
            if let Some(v) = a.learning_rate {
                c.learning_rate = v;
            }
            TrainConfig::Gbm(c)
        }
        ModelKind::Mlp => {
            let mut c = MlpConfig {
                class_weights: weights,
                seed,
                ..MlpConfig::default()
            };
            if let Some(v) = &a.hidden {
                c.hidden = v.clone();
            }
            if let Some(v) = a.max_epochs {
                c.max_epochs = v;
            }
            if let Some(v) = a.learning_rate {
                c.learning_rate = v;
            }
            TrainConfig::Mlp(c)
        }
        ModelKind::Sage => return Err(usage("sage is not a tabular model")),
    })
}

fn sage_config(a: &TrainArgs, seed: u64, weights: Option<Vec<f64>>) -> CliResult<SageConfig> {
    let mut c = SageConfig {
        class_weights: weights,
        seed,
        ..SageConfig::default()
    };
    if let Some(h) = &a.hidden {
        match h.as_slice() {
            [w] => c.hidden = *w,
            _ => return Err(usage("sage takes a single --hidden width")),
        }
    }
    if let Some(v) = a.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = a.learning_rate {
        c.learning_rate = v;
    }
    Ok(c)
}

fn graph_inputs(run: &mut Run, transfers: &Path, feats: &FeatureMatrix) -> CliResult<(stableaml::graph::TransactionGraph, Array2<f64>)> {
    let log = parse_transfers(run.read_input(transfers)?.as_slice())?;
    let g = build_graph(&log);
    let x = node_features(&g, feats)?;
    Ok((g, x))
}

pub fn train(a: &TrainArgs, seed: Option<u64>) -> CliResult<()> {
    if !(a.test_ratio > 0.0 && a.test_ratio < 1.0) {
        return Err(usage(format!("--test-ratio must lie in (0, 1), got {}", a.test_ratio)));
    }
    if a.model == ModelKind::Sage && a.transfers.is_none() {
        return Err(usage("--transfers is required for --model sage"));
    }
    let mut run = Run::start("train", a, &a.out)?;
    let feats = read_features(run.read_input(&a.features)?.as_slice())?;
    let labels = parse_wallet_labels(run.read_input(&a.labels)?.as_slice())?;
    let mut d = Dataset::from_features(&feats, &labels);
    if d.n() == 0 {
        return Err(data("no labeled wallet appears in the feature file"));
    }
    let original = d.y.clone();
    let spec = SplitSpec {
        ratio: 1.0 - a.test_ratio,
        seed: a.split_seed,
        stratified: true,
    };
    let (tr, te) = stratified_split(&d.y, &spec)?;
    if a.binary {
        d.y = binary_collapse(&d.y)?;
        d.k = 2;
    }
    let train = d.subset(&tr);
    let weights = match a.class_weights {
        WeightMode::None => None,
        WeightMode::Balanced => Some(balanced_class_weights(&train.y, train.k)),
    };
    let model_seed = seed.unwrap_or(42);
    run.set_seed(model_seed);

    let saved = if a.model == ModelKind::Sage {
        let cfg = sage_config(a, model_seed, weights)?;
        let transfers = a.transfers.as_deref().expect("checked above");
        let (g, x) = graph_inputs(&mut run, transfers, &feats)?;
        let pairs = tr
            .iter()
            .map(|&i| {
                g.id(&d.addresses[i])
                    .map(|v| (v, d.y[i]))
                    .ok_or_else(|| data(format!("labeled wallet {} is absent from the transfer log", d.addresses[i])))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let sg = SageGraph::from_graph(&g, cfg.fanout);
        SavedModel::Sage(train_sage(&sg, x.view(), &pairs, d.k, &cfg)?)
    } else {
        SavedModel::Tabular(tabular_config(a, model_seed, weights)?.train(&train)?)
    };
    let artifact = ModelArtifact::new(saved, model_seed, a.binary, train.addresses.clone());
    let mut buf = Vec::new();
    save_model(&artifact, &mut buf)?;
    run.write_output(MODEL_FILE, &buf)?;

    let names = class_names(3);
    let mut split = String::from("address,class,split\n");
    let mut role = vec!["train"; d.n()];
    for &i in &te {
        role[i] = "test";
    }
    for i in 0..d.n() {
        split.push_str(&format!("{},{},{}\n", d.addresses[i], names[original[i]].to_lowercase(), role[i]));
    }
    run.write_output(SPLIT_FILE, split.as_bytes())?;
    println!(
        "trained {} on {} wallets ({} held out)",
        artifact.model.kind(),
        tr.len(),
        te.len()
    );
    run.finish()?;
    Ok(())
}

/// Held-out rows of a trained model directory.
pub struct HeldOut {
    pub artifact: ModelArtifact,
    pub features: FeatureMatrix,
    /// Test rows in the model's label space.
    pub test: Dataset,
    pub transfers: Option<PathBuf>,
}

fn recorded_path(config: &BTreeMap<String, serde_json::Value>, key: &str) -> Option<PathBuf> {
    config.get(key).and_then(|v| v.as_str()).map(PathBuf::from)
}

fn test_addresses(bytes: &[u8]) -> CliResult<Vec<Address>> {
    let text = std::str::from_utf8(bytes).map_err(|e| data(format!("{SPLIT_FILE}: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(data(format!("{SPLIT_FILE} line {}: expected 3 columns", i + 1)));
        }
        if cols[2] == "test" {
            out.push(normalize_address(cols[0])?);
        }
    }
    Ok(out)
}

pub fn load_held_out(
    run: &mut Run,
    model_dir: &Path,
    features: Option<&Path>,
    labels: Option<&Path>,
    transfers: Option<&Path>,
) -> CliResult<HeldOut> {
    let trained = read_manifest(model_dir)?;
    let artifact = load_model(run.read_input(&model_dir.join(MODEL_FILE))?.as_slice())?;
    let features_path = features
        .map(Path::to_path_buf)
        .or_else(|| recorded_path(&trained.config, "features"))
        .ok_or_else(|| usage("no feature file recorded; pass --features"))?;
    let labels_path = labels
        .map(Path::to_path_buf)
        .or_else(|| recorded_path(&trained.config, "labels"))
        .ok_or_else(|| usage("no label file recorded; pass --labels"))?;
    let feats = read_features(run.read_input(&features_path)?.as_slice())?;
    let labels = parse_wallet_labels(run.read_input(&labels_path)?.as_slice())?;
    let wanted = test_addresses(&run.read_input(&model_dir.join(SPLIT_FILE))?)?;

    let mut d = Dataset::from_features(&feats, &labels);
    let index: BTreeMap<Address, usize> = d.addresses.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let rows = wanted
        .iter()
        .map(|a| index.get(a).copied().ok_or_else(|| data(format!("held-out wallet {a} has no labeled feature row"))))
        .collect::<CliResult<Vec<_>>>()?;
    if artifact.binary {
        d.y = binary_collapse(&d.y)?;
        d.k = 2;
    }
    let test = d.subset(&rows);
    let seen: std::collections::BTreeSet<&Address> = artifact.trained_on.iter().collect();
    let leaked = test.addresses.iter().filter(|a| seen.contains(a)).count();
    if leaked > 0 {
        return Err(data(format!("{leaked} held-out wallets were used in training")));
    }
    Ok(HeldOut {
        artifact,
        features: feats,
        test,
        transfers: transfers.map(Path::to_path_buf).or_else(|| recorded_path(&trained.config, "transfers")),
    })
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let out = a.out.clone().unwrap_or_else(|| a.model.join("evaluation"));
    let mut run = Run::start("evaluate", a, &out)?;
    let h = load_held_out(
        &mut run,
        &a.model,
        a.features.as_deref(),
        a.labels.as_deref(),
        a.transfers.as_deref(),
    )?;
    let probs = match &h.artifact.model {
        SavedModel::Tabular(m) => m.predict_proba(h.test.x.view())?,
        SavedModel::Sage(m) => {
            let transfers = h
                .transfers
                .as_deref()
                .ok_or_else(|| usage("no transfer log recorded; pass --transfers"))?;
            let log = parse_transfers(run.read_input(transfers)?.as_slice())?;
            let g = build_graph(&log);
            let all = sage_predict(m, &g, &h.features)?;
            let ids = h
                .test
                .addresses
                .iter()
                .map(|a| g.id(a).ok_or_else(|| data(format!("held-out wallet {a} is absent from the transfer log"))))
                .collect::<CliResult<Vec<_>>>()?;
            all.select(Axis(0), &ids)
        }
    };
    let body = serde_json::to_string(&h.artifact.model).map_err(|e| data(e.to_string()))?;
    let hash = config_hash(&body);
    let kind = h.artifact.model.kind();
    let report = if a.binary && !h.artifact.binary {
        if probs.ncols() != 3 {
            return Err(data("--binary expects a three-class model"));
        }
        binary_report(kind, &hash, &h.test.y, probs.view())?
    } else {
        report_from_proba(kind, &hash, &h.test.y, probs.view())?
    };
    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| data(e.to_string()))?;
    json.push(b'\n');
    run.write_output("metrics.json", &json)?;
    let text = format!("{}\n{}", per_class_table(std::slice::from_ref(&report)), macro_table(std::slice::from_ref(&report)));
    run.write_output("report.txt", text.as_bytes())?;
    print!("{text}");
    run.finish()?;
    Ok(())
}
