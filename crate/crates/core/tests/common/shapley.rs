//! Exponential-time Shapley reference for tree ensembles.

use stableaml::learners::{Model, Tree};

/// Expected tree output when only the features in `known` are fixed to
/// `row`; unknown splits average both children by training cover.
pub fn conditional_value(tree: &Tree, row: &[f64], known: &[bool], node: usize) -> Vec<f64> {
    let n = &tree.nodes[node];
    match &n.split {
        None => n.value.clone(),
        Some(s) if known[s.feature] => {
            let next = if row[s.feature] <= s.threshold { s.left } else { s.right };
            conditional_value(tree, row, known, next)
        }
        Some(s) => {
            let l = conditional_value(tree, row, known, s.left);
            let r = conditional_value(tree, row, known, s.right);
            let (wl, wr) = (tree.nodes[s.left].cover / n.cover, tree.nodes[s.right].cover / n.cover);
            l.iter().zip(&r).map(|(a, b)| wl * a + wr * b).collect()
        }
    }
}

/// Ensemble output for every class under a known-feature mask, on the
/// scale TreeSHAP explains.
pub fn ensemble_value(model: &Model, row: &[f64], known: &[bool]) -> Vec<f64> {
    match model {
        Model::Rf(m) => {
            let mut out = vec![0.0; m.k];
            for t in &m.trees {
                for (o, v) in out.iter_mut().zip(conditional_value(t, row, known, 0)) {
                    *o += v / m.trees.len() as f64;
                }
            }
            out
        }
        Model::Gbm(m) => {
            let mut out = m.base_score.clone();
            for round in &m.trees {
                for (c, t) in round.iter().enumerate() {
                    out[c] += conditional_value(t, row, known, 0)[0];
                }
            }
            out
        }
        _ => panic!("not a tree ensemble"),
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// `phi[class][feature]` by enumerating every feature subset.
pub fn brute_force_shap(model: &Model, row: &[f64]) -> Vec<Vec<f64>> {
    let d = row.len();
    let k = model.n_classes();
    let mut phi = vec![vec![0.0; d]; k];
    for i in 0..d {
        for mask in 0u32..(1 << d) {
            if mask & (1 << i) != 0 {
                continue;
            }
            let size = mask.count_ones() as usize;
            let weight = factorial(size) * factorial(d - size - 1) / factorial(d);
            let without: Vec<bool> = (0..d).map(|j| mask & (1 << j) != 0).collect();
            let mut with = without.clone();
            with[i] = true;
            let a = ensemble_value(model, row, &with);
            let b = ensemble_value(model, row, &without);
            for c in 0..k {
                phi[c][i] += weight * (a[c] - b[c]);
            }
        }
    }
    phi
}
