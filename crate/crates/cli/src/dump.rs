use std::fmt::Write as _;
use std::path::Path;

use stableaml::eval::class_names;
use stableaml::features::{feature_catalog, FEATURE_COUNT};
use stableaml::learners::{load_model, Dense, Model, ModelArtifact, SavedModel, Tree};

use crate::commands::model_file;
use crate::error::{data, CliResult};

fn feature_names(n: usize) -> Vec<String> {
    if n == FEATURE_COUNT {
        feature_catalog().names().map(str::to_string).collect()
    } else {
        (0..n).map(|j| format!("f{j}")).collect()
    }
}

fn fmt_values(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn tree(out: &mut String, t: &Tree, node: usize, depth: usize, names: &[String]) {
    let n = &t.nodes[node];
    let pad = "  ".repeat(depth + 1);
    match &n.split {
        Some(s) => {
            let _ = writeln!(
                out,
                "{pad}{node}: [{} <= {}] yes={} no={} gain={:.6} cover={}",
                names[s.feature], s.threshold, s.left, s.right, s.gain, n.cover
            );
            tree(out, t, s.left, depth + 1, names);
            tree(out, t, s.right, depth + 1, names);
        }
        None => {
            let _ = writeln!(out, "{pad}{node}: leaf={} cover={}", fmt_values(&n.value), n.cover);
        }
    }
}

fn layers(out: &mut String, ls: &[Dense]) {
    for (i, l) in ls.iter().enumerate() {
        let norm = l.w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let _ = writeln!(
            out,
            "  layer {i}: {} -> {}  |W|={norm:.6}  bias={}",
            l.w.nrows(),
            l.w.ncols(),
            fmt_values(l.b.as_slice().unwrap_or(&[]))
        );
    }
}

/// Readable listing of a model artifact.
pub fn render(art: &ModelArtifact) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "kind: {}\nseed: {}\nbinary: {}\ntrained_on: {} wallets",
        art.model.kind(),
        art.seed,
        art.binary,
        art.trained_on.len()
    );
    match &art.model {
        SavedModel::Tabular(model) => {
            let classes = class_names(model.n_classes());
            let names = feature_names(model.n_features());
            match model {
                Model::Logreg(m) => {
                    let _ = writeln!(out, "coefficients on standardized features, zeros omitted");
                    for c in 0..m.k {
                        let _ = writeln!(out, "class {}: intercept {:+.6}", classes[c], m.intercept[c]);
                        let mut idx: Vec<usize> = (0..m.coef.ncols()).filter(|&j| m.coef[[c, j]] != 0.0).collect();
                        idx.sort_by(|&a, &b| m.coef[[c, b]].abs().total_cmp(&m.coef[[c, a]].abs()).then(a.cmp(&b)));
                        for j in idx {
                            let _ = writeln!(out, "  {:<34} {:+.6}", names[j], m.coef[[c, j]]);
                        }
                    }
                }
                Model::Rf(m) => {
                    let _ = writeln!(out, "leaf values are class proportions {}", fmt_classes(&classes));
                    for (i, t) in m.trees.iter().enumerate() {
                        let _ = writeln!(out, "tree {i}");
                        tree(&mut out, t, 0, 0, &names);
                    }
                }
                Model::Gbm(m) => {
                    let _ = writeln!(out, "base score {}", fmt_values(&m.base_score));
                    for (r, round) in m.trees.iter().enumerate() {
                        for (c, t) in round.iter().enumerate() {
                            let _ = writeln!(out, "round {r} class {}", classes[c]);
                            tree(&mut out, t, 0, 0, &names);
                        }
                    }
                }
                Model::Mlp(m) => {
                    let _ = writeln!(
                        out,
                        "epochs trained: {}  best validation macro-F1: {}",
                        m.epochs_trained,
                        m.best_validation_f1.map_or("n/a".into(), |v| format!("{v:.4}"))
                    );
                    layers(&mut out, &m.layers);
                }
            }
        }
        SavedModel::Sage(m) => {
            let _ = writeln!(
                out,
                "fanout: {}  epochs trained: {}  best validation macro-F1: {}",
                m.config.fanout,
                m.epochs_trained,
                m.best_validation_f1.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
            layers(&mut out, &m.layers);
        }
    }
    out
}

fn fmt_classes(classes: &[String]) -> String {
    format!("[{}]", classes.join(", "))
}

pub fn dump(path: &Path) -> CliResult<()> {
    let file = model_file(path);
    let bytes = std::fs::read(&file).map_err(|e| data(format!("cannot read {}: {e}", file.display())))?;
    let art = load_model(bytes.as_slice())?;
    print!("{}", render(&art));
    Ok(())
}
