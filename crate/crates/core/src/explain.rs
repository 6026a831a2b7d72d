//! Feature importance: built-in scores, permutation drops, exact
//! path-dependent TreeSHAP, rank consensus and per-class signatures.

use std::io::Write;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::macro_f1;
use crate::learners::{LearnerError, Model, Tree};
use crate::rng;

const PERMUTE_STREAM: u64 = 0x9e47;
const SAMPLE_STREAM: u64 = 0x5a4b;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("{0} is not supported for this model kind")]
    NotApplicable(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] LearnerError),
    #[error("metric failed: {0}")]
    Metric(String),
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Split gain for tree ensembles, mean |coefficient| for logistic
/// regression; both normalized to sum to 1.
pub fn builtin_importance(model: &Model) -> Result<Vec<f64>, ExplainError> {
    match model {
        Model::Rf(m) => Ok(m.gain_importance()),
        Model::Gbm(m) => Ok(m.gain_importance()),
        Model::Logreg(m) => Ok(normalized(m.coefficient_importance())),
        Model::Mlp(_) => Err(ExplainError::NotApplicable("built-in importance".into())),
    }
}

/// Macro-F1 drop of `predict` when a column of `x` is permuted, averaged
/// over `repeats` seeded permutations per feature.
pub fn permutation_importance_with<F>(
    predict: F,
    x: ArrayView2<f64>,
    y: &[usize],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, ExplainError>
where
    F: Fn(ArrayView2<f64>) -> Result<Vec<usize>, ExplainError> + Sync,
{
    if x.nrows() != y.len() {
        return Err(ExplainError::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    let f1 = |pred: &[usize]| macro_f1(y, pred, k).map_err(|e| ExplainError::Metric(e.to_string()));
    let baseline = f1(&predict(x)?)?;
    (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let mut total = 0.0;
            let mut shuffled = x.to_owned();
            for r in 0..repeats {
                let mut g = rng::stream(seed, PERMUTE_STREAM, (j * repeats + r) as u64);
                let perm = rng::shuffled(x.nrows(), &mut g);
                for (i, &p) in perm.iter().enumerate() {
                    shuffled[[i, j]] = x[[p, j]];
                }
                total += baseline - f1(&predict(shuffled.view())?)?;
            }
            Ok(if repeats == 0 { 0.0 } else { total / repeats as f64 })
        })
        .collect()
}

pub fn permutation_importance(
    model: &Model,
    x: ArrayView2<f64>,
    y: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, ExplainError> {
    permutation_importance_with(
        |m| Ok(model.predict(m)?),
        x,
        y,
        model.n_classes(),
        repeats,
        seed,
    )
}

#[derive(Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d = depth as f64;
    for i in (0..depth).rev() {
        let w = path[i].weight;
        path[i + 1].weight += one * w * (i + 1) as f64 / (d + 1.0);
        path[i].weight = zero * w * (d - i as f64) / (d + 1.0);
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let d = depth as f64;
    let (one, zero) = (path[index].one, path[index].zero);
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (d + 1.0) / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (d - i as f64) / (d + 1.0);
        } else {
            path[i].weight = path[i].weight * (d + 1.0) / (zero * (d - i as f64));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let d = depth as f64;
    let (one, zero) = (path[index].one, path[index].zero);
    let mut total = 0.0;
    if one != 0.0 {
        let mut next = path[depth].weight;
        for i in (0..depth).rev() {
            let tmp = next / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (d - i as f64);
        }
    } else if zero != 0.0 {
        for i in (0..depth).rev() {
            total += path[i].weight / (zero * (d - i as f64));
        }
    }
    total * (d + 1.0)
}

/// Adds `scale` times the path-dependent Shapley values of one tree at `row`
/// to `phi` (features × outputs).
fn tree_shap_into(tree: &Tree, row: &[f64], scale: f64, phi: &mut Array2<f64>) {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        tree: &Tree,
        row: &[f64],
        node: usize,
        mut path: Vec<PathElement>,
        zero: f64,
        one: f64,
        feature: Option<usize>,
        scale: f64,
        phi: &mut Array2<f64>,
    ) {
        extend(&mut path, zero, one, feature);
        let n = &tree.nodes[node];
        match &n.split {
            None => {
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    let el = path[i];
                    let f = el.feature.expect("non-root path element");
                    for (o, v) in n.value.iter().enumerate() {
                        phi[[f, o]] += scale * w * (el.one - el.zero) * v;
                    }
                }
            }
            Some(s) => {
                let (hot, cold) = if row[s.feature] <= s.threshold {
                    (s.left, s.right)
                } else {
                    (s.right, s.left)
                };
                let (mut iz, mut io) = (1.0, 1.0);
                if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(s.feature)) {
                    iz = path[k].zero;
                    io = path[k].one;
                    unwind(&mut path, k);
                }
                let cover = n.cover;
                let hz = tree.nodes[hot].cover / cover;
                let cz = tree.nodes[cold].cover / cover;
                recurse(tree, row, hot, path.clone(), hz * iz, io, Some(s.feature), scale, phi);
                recurse(tree, row, cold, path, cz * iz, 0.0, Some(s.feature), scale, phi);
            }
        }
    }
    recurse(tree, row, 0, Vec::with_capacity(tree.depth() + 2), 1.0, 1.0, None, scale, phi);
}

/// Cover-weighted mean leaf value of a tree.
pub fn tree_expected_value(tree: &Tree) -> Vec<f64> {
    fn walk(t: &Tree, i: usize, out: &mut [f64], weight: f64) {
        let n = &t.nodes[i];
        match &n.split {
            None => {
                for (o, v) in out.iter_mut().zip(&n.value) {
                    *o += weight * v;
                }
            }
            Some(s) => {
                walk(t, s.left, out, weight * t.nodes[s.left].cover / n.cover);
                walk(t, s.right, out, weight * t.nodes[s.right].cover / n.cover);
            }
        }
    }
    let mut out = vec![0.0; tree.nodes[0].value.len()];
    walk(tree, 0, &mut out, 1.0);
    out
}

/// Shapley values of one tree at `row`, features × outputs.
pub fn tree_shap(tree: &Tree, row: &[f64], n_features: usize) -> Array2<f64> {
    let mut phi = Array2::zeros((n_features, tree.nodes[0].value.len()));
    tree_shap_into(tree, row, 1.0, &mut phi);
    phi
}

/// Attributions `values[[sample, class, feature]]` with one base value per
/// class; RF on the probability scale, GBM on the logit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapMatrix {
    pub values: Array3<f64>,
    pub base: Vec<f64>,
}

impl ShapMatrix {
    /// Mean |φ| per feature over samples and classes.
    pub fn mean_abs(&self) -> Vec<f64> {
        let (n, k, d) = self.values.dim();
        let mut out = vec![0.0; d];
        for v in self.values.iter().enumerate() {
            out[v.0 % d] += v.1.abs();
        }
        let denom = (n * k).max(1) as f64;
        out.iter_mut().for_each(|v| *v /= denom);
        out
    }
}

pub fn ensemble_shap(model: &Model, x: ArrayView2<f64>) -> Result<ShapMatrix, ExplainError> {
    let d = model.n_features();
    if x.ncols() != d {
        return Err(ExplainError::Shape(format!("expected {d} columns, got {}", x.ncols())));
    }
    let k = model.n_classes();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let (base, per_row): (Vec<f64>, Vec<Array2<f64>>) = match model {
        Model::Rf(m) => {
            let scale = 1.0 / m.trees.len() as f64;
            let mut base = vec![0.0; k];
            for t in &m.trees {
                for (b, e) in base.iter_mut().zip(tree_expected_value(t)) {
                    *b += scale * e;
                }
            }
            let per_row = rows
                .par_iter()
                .map(|row| {
                    let mut phi = Array2::zeros((d, k));
                    for t in &m.trees {
                        tree_shap_into(t, row, scale, &mut phi);
                    }
                    phi
                })
                .collect();
            (base, per_row)
        }
        Model::Gbm(m) => {
            let mut base = m.base_score.clone();
            for round in &m.trees {
                for (c, t) in round.iter().enumerate() {
                    base[c] += tree_expected_value(t)[0];
                }
            }
            let per_row = rows
                .par_iter()
                .map(|row| {
                    let mut phi = Array2::zeros((d, k));
                    let mut col = Array2::zeros((d, 1));
                    for round in &m.trees {
                        for (c, t) in round.iter().enumerate() {
                            col.fill(0.0);
                            tree_shap_into(t, row, 1.0, &mut col);
                            let mut dst = phi.column_mut(c);
                            dst += &col.column(0);
                        }
                    }
                    phi
                })
                .collect();
            (base, per_row)
        }
        _ => return Err(ExplainError::NotApplicable("TreeSHAP".into())),
    };
    let mut values = Array3::zeros((rows.len(), k, d));
    for (i, phi) in per_row.iter().enumerate() {
        values.index_axis_mut(Axis(0), i).assign(&phi.t());
    }
    Ok(ShapMatrix { values, base })
}

/// The model output TreeSHAP explains: probabilities for RF, logits for GBM.
pub fn shap_target(model: &Model, x: ArrayView2<f64>) -> Result<Array2<f64>, ExplainError> {
    match model {
        Model::Rf(m) => Ok(m.predict_proba(x)?),
        Model::Gbm(m) => Ok(m.decision_function(x)?),
        _ => Err(ExplainError::NotApplicable("TreeSHAP".into())),
    }
}

/// Seeded subsample of at most `max` row indices, ascending.
pub fn sample_rows(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut g = rng::stream(seed, SAMPLE_STREAM, 0);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut g, n, max).into_vec();
    idx.sort_unstable();
    idx
}

/// Descending-score ordinal ranks starting at 1; tied scores share the mean
/// of the ranks they span.
pub fn fractional_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceColumn {
    pub name: String,
    pub scores: Vec<f64>,
    pub ranks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub features: Vec<String>,
    pub columns: Vec<ImportanceColumn>,
    pub avg_rank: Vec<f64>,
    /// 1 = most important; a permutation of 1..=features.len().
    pub consensus_rank: Vec<usize>,
}

impl ImportanceTable {
    /// Feature indices ordered by consensus rank.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by_key(|&i| self.consensus_rank[i]);
        idx
    }
}

pub fn consensus_rank(features: &[String], columns: &[(String, Vec<f64>)]) -> Result<ImportanceTable, ExplainError> {
    if columns.is_empty() {
        return Err(ExplainError::Shape("no importance columns".into()));
    }
    let d = features.len();
    let mut cols = Vec::with_capacity(columns.len());
    for (name, scores) in columns {
        if scores.len() != d {
            return Err(ExplainError::Shape(format!("column {name} has {} scores for {d} features", scores.len())));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(ExplainError::Shape(format!("column {name} has non-finite scores")));
        }
        cols.push(ImportanceColumn {
            name: name.clone(),
            scores: scores.clone(),
            ranks: fractional_ranks(scores),
        });
    }
    let avg_rank: Vec<f64> = (0..d)
        .map(|f| cols.iter().map(|c| c.ranks[f]).sum::<f64>() / cols.len() as f64)
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| avg_rank[a].total_cmp(&avg_rank[b]).then(a.cmp(&b)));
    let mut consensus = vec![0; d];
    for (pos, &f) in order.iter().enumerate() {
        consensus[f] = pos + 1;
    }
    Ok(ImportanceTable {
        features: features.to_vec(),
        columns: cols,
        avg_rank,
        consensus_rank: consensus,
    })
}

/// Mean |SHAP| per feature (rows) and class (columns) over the samples of
/// that class, normalized per column and averaged over `models`.
pub fn class_signature_matrix(models: &[&Model], x: ArrayView2<f64>, y: &[usize]) -> Result<Array2<f64>, ExplainError> {
    let first = models
        .first()
        .ok_or_else(|| ExplainError::Shape("no models supplied".into()))?;
    if x.nrows() != y.len() {
        return Err(ExplainError::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    let (d, k) = (first.n_features(), first.n_classes());
    let mut out = Array2::zeros((d, k));
    for model in models {
        let shap = ensemble_shap(model, x)?;
        let mut m = Array2::<f64>::zeros((d, k));
        let mut counts = vec![0usize; k];
        for (i, &c) in y.iter().enumerate() {
            counts[c] += 1;
            for f in 0..d {
                m[[f, c]] += shap.values[[i, c, f]].abs();
            }
        }
        for c in 0..k {
            let s: f64 = m.column(c).sum();
            if counts[c] > 0 && s > 0.0 {
                m.column_mut(c).mapv_inplace(|v| v / s);
            }
        }
        out += &m;
    }
    out /= models.len() as f64;
    Ok(out)
}

fn fmt_score(v: f64) -> String {
    format!("{v:.6}")
}

/// `feature,<column>...,avg_rank,consensus_rank`, rows in catalog order.
pub fn write_importance<W: Write>(table: &ImportanceTable, sink: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["feature".to_string()];
    header.extend(table.columns.iter().map(|c| c.name.clone()));
    header.push("avg_rank".into());
    header.push("consensus_rank".into());
    w.write_record(&header)?;
    for (f, name) in table.features.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(table.columns.iter().map(|c| fmt_score(c.scores[f])));
        rec.push(format!("{:.3}", table.avg_rank[f]));
        rec.push(table.consensus_rank[f].to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// `feature,normal,cybercrime,blocklisted` (or one column per class).
pub fn write_signatures<W: Write>(features: &[String], matrix: &Array2<f64>, sink: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let classes: Vec<String> = if matrix.ncols() == 3 {
        vec!["normal".into(), "cybercrime".into(), "blocklisted".into()]
    } else if matrix.ncols() == 2 {
        vec!["normal".into(), "suspicious".into()]
    } else {
        (0..matrix.ncols()).map(|c| format!("class_{c}")).collect()
    };
    let mut header = vec!["feature".to_string()];
    header.extend(classes);
    w.write_record(&header)?;
    for (f, name) in features.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(matrix.row(f).iter().map(|&v| fmt_score(v)));
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Node, Split};

    fn stump() -> Tree {
        let leaf = |v: f64| Node {
            split: None,
            value: vec![v],
            cover: 50.0,
        };
        Tree {
            nodes: vec![
                Node {
                    split: Some(Split {
                        feature: 0,
                        threshold: 0.5,
                        left: 1,
                        right: 2,
                        gain: 1.0,
                    }),
                    value: vec![0.5],
                    cover: 100.0,
                },
                leaf(0.0),
                leaf(1.0),
            ],
        }
    }

    #[test]
    fn stump_attribution() {
        let t = stump();
        let phi = tree_shap(&t, &[0.7, 3.0], 2);
        assert_eq!(tree_expected_value(&t), vec![0.5]);
        assert!((phi[[0, 0]] - 0.5).abs() < 1e-15);
        assert_eq!(phi[[1, 0]], 0.0);
    }

    #[test]
    fn consensus_examples() {
        let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let t = consensus_rank(
            &names,
            &[("m1".into(), vec![3.0, 2.0, 1.0]), ("m2".into(), vec![1.0, 3.0, 2.0])],
        )
        .unwrap();
        assert_eq!(t.avg_rank, vec![2.0, 1.5, 2.5]);
        assert_eq!(t.consensus_rank, vec![2, 1, 3]);
        let single = consensus_rank(&names, &[("m".into(), vec![0.1, 0.5, 0.2])]).unwrap();
        assert_eq!(single.consensus_rank, vec![3, 1, 2]);
        assert!(consensus_rank(&names, &[("m".into(), vec![1.0])]).is_err());
    }

    #[test]
    fn ties_get_fractional_ranks() {
        assert_eq!(fractional_ranks(&[1.0, 5.0, 1.0, 0.0]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn sampling_is_bounded_and_sorted() {
        let s = sample_rows(10_000, 3000, 1);
        assert_eq!(s.len(), 3000);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_rows(5, 3000, 1), vec![0, 1, 2, 3, 4]);
    }
}
