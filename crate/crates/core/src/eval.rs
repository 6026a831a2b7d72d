//! Train/test splitting, classification metrics, the binary Normal vs
//! Suspicious setting and report rendering.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::Address;
use crate::learners::{argmax_rows, Dataset, LearnerError, Model};
use crate::rng;

const SPLIT_STREAM: u64 = 0x5917;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot stratify: {0}")]
    Stratify(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("empty input")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {0} out of range")]
    Label(usize),
    #[error("{0} test rows were used in training")]
    Leakage(usize),
    #[error(transparent)]
    Model(#[from] LearnerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratio: 0.8,
            seed: 42,
            stratified: true,
        }
    }
}

fn train_share(n: usize, ratio: f64) -> usize {
    ((n as f64 * ratio).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Returns sorted (train, test) row indices.
pub fn stratified_split(labels: &[usize], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(spec.ratio > 0.0 && spec.ratio < 1.0) {
        return Err(EvalError::Stratify(format!("ratio {} outside (0, 1)", spec.ratio)));
    }
    if labels.len() < 2 {
        return Err(EvalError::Stratify("fewer than two rows".into()));
    }
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut g = vec![Vec::new(); k];
        for (i, &c) in labels.iter().enumerate() {
            g[c].push(i);
        }
        for (c, members) in g.iter().enumerate() {
            if members.len() == 1 {
                return Err(EvalError::Stratify(format!("class {c} has a single member")));
            }
        }
        g
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (gi, members) in groups.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut r = rng::stream(spec.seed, SPLIT_STREAM, gi as u64);
        let order = rng::shuffled(members.len(), &mut r);
        let cut = train_share(members.len(), spec.ratio);
        for (pos, &o) in order.iter().enumerate() {
            if pos < cut {
                train.push(members[o]);
            } else {
                test.push(members[o]);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: Option<f64>,
    pub support: usize,
    /// Set when any of precision, recall or F1 hit a zero denominator.
    pub zero_division: bool,
}

pub fn class_names(k: usize) -> Vec<String> {
    match k {
        2 => vec!["Normal".into(), "Suspicious".into()],
        3 => vec!["Normal".into(), "Cybercrime".into(), "Blocklisted".into()],
        _ => (0..k).map(|c| format!("class {c}")).collect(),
    }
}

fn check_labels(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<(), EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Shape(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= k) {
        return Err(EvalError::Label(bad));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn per_class_metrics(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<ClassMetrics>, EvalError> {
    check_labels(y_true, y_pred, k)?;
    let names = class_names(k);
    Ok((0..k)
        .map(|c| {
            let tp = y_true.iter().zip(y_pred).filter(|&(&t, &p)| t == c && p == c).count();
            let predicted = y_pred.iter().filter(|&&p| p == c).count();
            let support = y_true.iter().filter(|&&t| t == c).count();
            let (precision, zp) = ratio(tp, predicted);
            let (recall, zr) = ratio(tp, support);
            let (f1, zf) = if precision + recall > 0.0 {
                (2.0 * precision * recall / (precision + recall), false)
            } else {
                (0.0, true)
            };
            ClassMetrics {
                class: c,
                name: names[c].clone(),
                precision,
                recall,
                f1,
                auroc: None,
                support,
                zero_division: zp || zr || zf,
            }
        })
        .collect())
}

pub fn macro_f1(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<f64, EvalError> {
    let m = per_class_metrics(y_true, y_pred, k)?;
    Ok(m.iter().map(|c| c.f1).sum::<f64>() / k as f64)
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64, EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Shape(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    Ok(y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count() as f64 / y_true.len() as f64)
}

/// One-vs-rest AUROC for `class` from midranks of `scores`.
pub fn ovr_auroc(y_true: &[usize], scores: &[f64], class: usize) -> Result<f64, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::Shape(format!("{} labels vs {} scores", y_true.len(), scores.len())));
    }
    let pos = y_true.iter().filter(|&&c| c == class).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::Undefined(format!("class {class} needs positives and negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if y_true[o] == class {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Maps Cybercrime and Blocklisted onto a single Suspicious class.
pub fn binary_collapse(labels: &[usize]) -> Result<Vec<usize>, EvalError> {
    labels
        .iter()
        .map(|&c| match c {
            0 => Ok(0),
            1 | 2 => Ok(1),
            _ => Err(EvalError::Label(c)),
        })
        .collect()
}

/// Sums the Cybercrime and Blocklisted probability columns.
pub fn collapse_proba(probs: ArrayView2<f64>) -> Result<Array2<f64>, EvalError> {
    if probs.ncols() != 3 {
        return Err(EvalError::Shape(format!("expected 3 probability columns, got {}", probs.ncols())));
    }
    Ok(Array2::from_shape_fn((probs.nrows(), 2), |(i, j)| {
        if j == 0 {
            probs[[i, 0]]
        } else {
            probs[[i, 1]] + probs[[i, 2]]
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub config_hash: String,
    pub k: usize,
    pub n_test: usize,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Mean over classes whose AUROC is defined.
    pub macro_auroc: Option<f64>,
}

pub fn config_hash(config_json: &str) -> String {
    let digest = Sha256::digest(config_json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Report from ground truth and predicted probabilities; predictions are the
/// row-wise argmax.
pub fn report_from_proba(
    model: &str,
    config_hash: &str,
    y_true: &[usize],
    probs: ArrayView2<f64>,
) -> Result<MetricsReport, EvalError> {
    let y_pred = argmax_rows(probs);
    report_from_predictions(model, config_hash, y_true, &y_pred, probs)
}

/// Report from explicit predictions; `probs` supplies the AUROC scores.
pub fn report_from_predictions(
    model: &str,
    config_hash: &str,
    y_true: &[usize],
    y_pred: &[usize],
    probs: ArrayView2<f64>,
) -> Result<MetricsReport, EvalError> {
    let k = probs.ncols();
    if probs.nrows() != y_true.len() {
        return Err(EvalError::Shape(format!("{} rows vs {} labels", probs.nrows(), y_true.len())));
    }
    let mut per_class = per_class_metrics(y_true, y_pred, k)?;
    for (c, m) in per_class.iter_mut().enumerate() {
        let col: Vec<f64> = probs.column(c).to_vec();
        m.auroc = ovr_auroc(y_true, &col, c).ok();
    }
    let mean = |f: &dyn Fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let aurocs: Vec<f64> = per_class.iter().filter_map(|m| m.auroc).collect();
    Ok(MetricsReport {
        model: model.to_string(),
        config_hash: config_hash.to_string(),
        k,
        n_test: y_true.len(),
        accuracy: accuracy(y_true, y_pred)?,
        macro_precision: mean(&|m| m.precision),
        macro_recall: mean(&|m| m.recall),
        macro_f1: mean(&|m| m.f1),
        macro_auroc: (!aurocs.is_empty()).then(|| aurocs.iter().sum::<f64>() / aurocs.len() as f64),
        per_class,
    })
}

/// Evaluates `model` on `test`, refusing rows whose address is in `trained_on`.
pub fn evaluate(model: &Model, trained_on: &[Address], test: &Dataset) -> Result<MetricsReport, EvalError> {
    let seen: BTreeSet<&Address> = trained_on.iter().collect();
    let leaked = test.addresses.iter().filter(|a| seen.contains(a)).count();
    if leaked > 0 {
        return Err(EvalError::Leakage(leaked));
    }
    let probs = model.predict_proba(test.x.view())?;
    let cfg = serde_json::to_string(model).expect("model serializes");
    report_from_proba(model.kind(), &config_hash(&cfg), &test.y, probs.view())
}

/// Binary report of a three-class model: predicted labels are collapsed
/// after the argmax, AUROC uses the summed Suspicious probability.
pub fn binary_report(model: &str, hash: &str, y_true: &[usize], probs: ArrayView2<f64>) -> Result<MetricsReport, EvalError> {
    let y = binary_collapse(y_true)?;
    let pred = binary_collapse(&argmax_rows(probs))?;
    let p = collapse_proba(probs)?;
    report_from_predictions(model, hash, &y, &pred, p.view())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "   n/a".to_string(), |v| format!("{v:.4}"))
}

/// Per-class table, one block per model.
pub fn per_class_table(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<12} {:>7} {:>9} {:>7} {:>7} {:>8}",
        "Model", "Class", "AUROC", "Precision", "Recall", "F1", "Support"
    );
    for r in reports {
        for m in &r.per_class {
            let _ = writeln!(
                s,
                "{:<10} {:<12} {:>7} {:>9.4} {:>7.4} {:>7.4} {:>8}{}",
                r.model,
                m.name,
                fmt_opt(m.auroc),
                m.precision,
                m.recall,
                m.f1,
                m.support,
                if m.zero_division { " *" } else { "" }
            );
        }
    }
    s
}

/// Macro-averaged table, one row per model.
pub fn macro_table(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>9} {:>9} {:>13}",
        "Model", "AUROC", "Accuracy", "Macro-F1", "Macro-Recall"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>9.4} {:>9.4} {:>13.4}",
            r.model,
            fmt_opt(r.macro_auroc),
            r.accuracy,
            r.macro_f1,
            r.macro_recall
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn split_counts_round_then_clamp() {
        let labels: Vec<usize> = [0; 5].into_iter().chain([1; 3]).chain([2; 2]).collect();
        let (train, test) = stratified_split(&labels, &SplitSpec::default()).unwrap();
        let count = |idx: &[usize], c| idx.iter().filter(|&&i| labels[i] == c).count();
        assert_eq!([count(&train, 0), count(&train, 1), count(&train, 2)], [4, 2, 1]);
        assert_eq!([count(&test, 0), count(&test, 1), count(&test, 2)], [1, 1, 1]);
    }

    #[test]
    fn singleton_class_cannot_stratify() {
        assert!(matches!(
            stratified_split(&[0, 0, 1], &SplitSpec::default()),
            Err(EvalError::Stratify(_))
        ));
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(ovr_auroc(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1], 1).unwrap(), 0.75);
        assert_eq!(ovr_auroc(&[1, 0, 1, 0], &[0.5; 4], 1).unwrap(), 0.5);
        assert_eq!(ovr_auroc(&[0, 0, 1, 1], &[0.1, 0.2, 0.3, 0.4], 1).unwrap(), 1.0);
        assert!(matches!(ovr_auroc(&[0, 0], &[0.1, 0.2], 1), Err(EvalError::Undefined(_))));
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(binary_collapse(&[0, 1, 2, 1]).unwrap(), vec![0, 1, 1, 1]);
        assert_eq!(binary_collapse(&[0, 0]).unwrap(), vec![0, 0]);
        assert!(binary_collapse(&[3]).is_err());
    }

    #[test]
    fn zero_division_is_flagged() {
        let m = per_class_metrics(&[0, 0, 1], &[0, 0, 0], 3).unwrap();
        assert_eq!(m[1].f1, 0.0);
        assert!(m[1].zero_division && m[2].zero_division && !m[0].zero_division);
    }

    #[test]
    fn report_macro_is_mean_of_classes() {
        let probs = array![[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.2, 0.3, 0.5], [0.3, 0.4, 0.3]];
        let r = report_from_proba("x", "0", &[0, 1, 2, 2], probs.view()).unwrap();
        let mean = r.per_class.iter().map(|m| m.f1).sum::<f64>() / 3.0;
        assert_eq!(r.macro_f1, mean);
        assert_eq!(r.per_class.iter().map(|m| m.support).sum::<usize>(), 4);
    }
}
