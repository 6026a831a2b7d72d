use std::collections::BTreeMap;

use ndarray::Axis;
use stableaml::eval::{macro_table, per_class_table, MetricsReport};
use stableaml::explain::{
    builtin_importance, class_signature_matrix, consensus_rank, ensemble_shap, permutation_importance, sample_rows,
    write_importance, write_signatures, ExplainError,
};
use stableaml::features::feature_catalog;
use stableaml::learners::{load_model, Model, SavedModel};

use super::model::{load_held_out, MODEL_FILE};
use crate::args::{ExplainArgs, Method, ReportArgs};
use crate::error::{data, usage, CliResult};
use crate::manifest::Run;

fn is_tree(m: &Model) -> bool {
    matches!(m, Model::Rf(_) | Model::Gbm(_))
}

pub fn explain(a: &ExplainArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = seed.unwrap_or(42);
    let mut run = Run::start("explain", a, &a.out)?;
    run.set_seed(seed);
    let held = load_held_out(&mut run, &a.model[0], None, None, None)?;
    let mut models = Vec::new();
    for dir in &a.model {
        let artifact = if dir == &a.model[0] {
            held.artifact.clone()
        } else {
            load_model(run.read_input(&dir.join(MODEL_FILE))?.as_slice())?
        };
        if artifact.binary != held.artifact.binary {
            return Err(usage("cannot mix binary and three-class models"));
        }
        let overlap = held
            .test
            .addresses
            .iter()
            .filter(|w| artifact.trained_on.contains(w))
            .count();
        if overlap > 0 {
            return Err(data(format!(
                "{} was trained on {overlap} wallets held out by {}",
                dir.display(),
                a.model[0].display()
            )));
        }
        match artifact.model {
            SavedModel::Tabular(m) => models.push(m),
            SavedModel::Sage(_) => {
                return Err(usage(format!("{} holds a graph model; explain needs tabular models", dir.display())))
            }
        }
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let labels: Vec<String> = models
        .iter()
        .map(|m| {
            let n = counts.entry(m.kind()).or_insert(0);
            *n += 1;
            if *n == 1 {
                m.kind().to_string()
            } else {
                format!("{}{}", m.kind(), n)
            }
        })
        .collect();

    let test = &held.test;
    let shap_rows = sample_rows(test.n(), a.max_rows, seed);
    let shap_x = test.x.select(Axis(0), &shap_rows);
    let shap_y: Vec<usize> = shap_rows.iter().map(|&i| test.y[i]).collect();
    let mut methods = a.methods.clone();
    methods.sort();
    methods.dedup();

    let mut columns = Vec::new();
    for method in &methods {
        for (m, label) in models.iter().zip(&labels) {
            let scores = match method {
                Method::Builtin => match builtin_importance(m) {
                    Ok(s) => s,
                    Err(ExplainError::NotApplicable(_)) => continue,
                    Err(e) => return Err(e.into()),
                },
                Method::Permutation => permutation_importance(m, test.x.view(), &test.y, a.repeats, seed)?,
                Method::Shap if is_tree(m) => ensemble_shap(m, shap_x.view())?.mean_abs(),
                Method::Shap => continue,
            };
            let suffix = match method {
                Method::Builtin => "builtin",
                Method::Permutation => "permutation",
                Method::Shap => "shap",
            };
            columns.push((format!("{label}_{suffix}"), scores));
        }
    }
    if columns.is_empty() {
        return Err(usage("no importance method applies to the given models"));
    }
    let names: Vec<String> = feature_catalog().names().map(str::to_string).collect();
    let table = consensus_rank(&names, &columns)?;
    let mut buf = Vec::new();
    write_importance(&table, &mut buf)?;
    run.write_output("importance.csv", &buf)?;

    let trees: Vec<&Model> = models.iter().filter(|m| is_tree(m)).collect();
    if methods.contains(&Method::Shap) && !trees.is_empty() {
        let sig = class_signature_matrix(&trees, shap_x.view(), &shap_y)?;
        let mut buf = Vec::new();
        write_signatures(&names, &sig, &mut buf)?;
        run.write_output("signatures.csv", &buf)?;
    }

    println!(
        "{} importance columns over {} held-out wallets",
        table.columns.len(),
        test.n()
    );
    if a.consensus {
        println!("{:>4}  {:<34} {:>8}", "rank", "feature", "avg_rank");
        for &f in table.order().iter().take(a.top) {
            println!("{:>4}  {:<34} {:>8.3}", table.consensus_rank[f], table.features[f], table.avg_rank[f]);
        }
    }
    run.finish()?;
    Ok(())
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    let mut run = match &a.out {
        Some(out) => Some(Run::start("report", a, out)?),
        None => None,
    };
    let mut reports: Vec<MetricsReport> = Vec::new();
    for dir in &a.input {
        let path = dir.join("metrics.json");
        let bytes = match run.as_mut() {
            Some(r) => r.read_input(&path)?,
            None => std::fs::read(&path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))?,
        };
        reports.push(serde_json::from_slice(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))?);
    }
    let text = format!("{}\n{}", per_class_table(&reports), macro_table(&reports));
    print!("{text}");
    if let Some(mut run) = run {
        run.write_output("report.txt", text.as_bytes())?;
        let mut json = serde_json::to_vec_pretty(&reports).map_err(|e| data(e.to_string()))?;
        json.push(b'\n');
        run.write_output("report.json", &json)?;
        run.finish()?;
    }
    Ok(())
}
