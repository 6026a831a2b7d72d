//! CART growth shared by the single tree, the forest and the booster.
//!
//! Trees grow level by level. Each feature column is sorted once per
//! dataset; a level scans every sorted column a single time and keeps
//! running left-hand statistics per open node, so one level costs
//! O(features × rows) regardless of how many nodes are open.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Criterion improvement achieved by this split.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub split: Option<Split>,
    /// Class proportions (classification) or a single additive score (boosting).
    pub value: Vec<f64>,
    /// Training rows reaching the node, counted with multiplicity.
    pub cover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while let Some(s) = &self.nodes[i].split {
            i = if row[s.feature] <= s.threshold { s.left } else { s.right };
        }
        i
    }

    pub fn leaf_value(&self, row: &[f64]) -> &[f64] {
        &self.nodes[self.leaf_index(row)].value
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i].split {
                None => 0,
                Some(s) => 1 + walk(t, s.left).max(walk(t, s.right)),
            }
        }
        walk(self, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    /// Total split gain per feature.
    pub fn add_gains(&self, into: &mut [f64]) {
        for n in &self.nodes {
            if let Some(s) = &n.split {
                into[s.feature] += s.gain;
            }
        }
    }
}

/// Gini impurity of a class-count vector.
pub fn gini(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Criterion {
    /// Per-row statistic: class one-hot times the row weight.
    Gini { classes: usize },
    /// Per-row statistic: (gradient, hessian), both times the row weight.
    Newton { lambda: f64, min_child_weight: f64 },
}

impl Criterion {
    fn width(&self) -> usize {
        match self {
            Criterion::Gini { classes } => *classes,
            Criterion::Newton { .. } => 2,
        }
    }

    /// Score whose parent-to-children increase is the split gain.
    fn score(&self, stat: &[f64]) -> f64 {
        match self {
            Criterion::Gini { .. } => {
                let total: f64 = stat.iter().sum();
                if total <= 0.0 {
                    0.0
                } else {
                    stat.iter().map(|c| c * c).sum::<f64>() / total
                }
            }
            Criterion::Newton { lambda, .. } => 0.5 * stat[0] * stat[0] / (stat[1] + lambda),
        }
    }

    fn child_ok(&self, stat: &[f64]) -> bool {
        match self {
            Criterion::Gini { .. } => true,
            Criterion::Newton { min_child_weight, .. } => stat[1] >= *min_child_weight,
        }
    }

    fn pure(&self, stat: &[f64]) -> bool {
        match self {
            Criterion::Gini { .. } => stat.iter().filter(|&&c| c > 0.0).count() <= 1,
            Criterion::Newton { .. } => false,
        }
    }

    fn value(&self, stat: &[f64]) -> Vec<f64> {
        match self {
            Criterion::Gini { .. } => {
                let total: f64 = stat.iter().sum();
                if total > 0.0 {
                    stat.iter().map(|c| c / total).collect()
                } else {
                    vec![1.0 / stat.len() as f64; stat.len()]
                }
            }
            Criterion::Newton { lambda, .. } => vec![-stat[0] / (stat[1] + lambda)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: f64,
    pub min_samples_leaf: f64,
}

/// Row indices of each feature column sorted by value (ties by row).
pub(crate) struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: ArrayView2<f64>) -> Self {
        let order = (0..x.ncols())
            .into_par_iter()
            .map(|f| {
                let col = x.column(f);
                let mut idx: Vec<u32> = (0..x.nrows() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }
}

const NONE: u32 = u32::MAX;
const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Open {
    node: usize,
    stat: Vec<f64>,
    count: f64,
    depth: usize,
    features: Option<Vec<bool>>,
    splittable: bool,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

/// Grows one tree on rows with positive `count`. `stats` is row-major with
/// `criterion.width()` entries per row; `features(node)` optionally limits
/// the candidate features of a node.
pub(crate) fn grow(
    x: ArrayView2<f64>,
    sorted: &Presorted,
    count: &[f64],
    stats: &[f64],
    criterion: Criterion,
    params: GrowParams,
    features: &mut dyn FnMut(usize) -> Option<Vec<bool>>,
) -> Tree {
    let (n, d, s) = (x.nrows(), x.ncols(), criterion.width());
    let mut node_of = vec![NONE; n];
    let mut root_stat = vec![0.0; s];
    let mut root_count = 0.0;
    for r in 0..n {
        if count[r] > 0.0 {
            node_of[r] = 0;
            root_count += count[r];
            for t in 0..s {
                root_stat[t] += stats[r * s + t];
            }
        }
    }
    let mut nodes = vec![Node {
        split: None,
        value: criterion.value(&root_stat),
        cover: root_count,
    }];
    let mut frontier = vec![Open {
        node: 0,
        stat: root_stat,
        count: root_count,
        depth: 0,
        features: features(0),
        splittable: false,
    }];
    let mut order: Vec<Vec<u32>> = sorted
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&r| count[r as usize] > 0.0).collect())
        .collect();

    while !frontier.is_empty() {
        for o in frontier.iter_mut() {
            o.splittable = params.max_depth.is_none_or(|m| o.depth < m)
                && o.count >= params.min_samples_split
                && o.count >= 2.0 * params.min_samples_leaf
                && !criterion.pure(&o.stat);
        }
        if !frontier.iter().any(|o| o.splittable) {
            break;
        }
        // rows in unsplittable nodes no longer matter
        let mut active = 0usize;
        for r in 0..n {
            let j = node_of[r];
            if j != NONE {
                if frontier[j as usize].splittable {
                    active += 1;
                } else {
                    node_of[r] = NONE;
                }
            }
        }
        if active * 2 < order.first().map_or(0, Vec::len) {
            for o in order.iter_mut() {
                o.retain(|&r| node_of[r as usize] != NONE);
            }
        }

        let m = frontier.len();
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..d)
            .into_par_iter()
            .map(|f| {
                let used: Vec<bool> = frontier
                    .iter()
                    .map(|o| o.splittable && o.features.as_ref().is_none_or(|mask| mask[f]))
                    .collect();
                let mut best: Vec<Option<Candidate>> = vec![None; m];
                if !used.iter().any(|&u| u) {
                    return best;
                }
                let col = x.column(f);
                let mut left = vec![0.0; m * s];
                let mut left_count = vec![0.0; m];
                let mut last = vec![f64::NAN; m];
                let mut right = vec![0.0; s];
                for &r in &order[f] {
                    let j = node_of[r as usize];
                    if j == NONE || !used[j as usize] {
                        continue;
                    }
                    let j = j as usize;
                    let v = col[r as usize];
                    if left_count[j] > 0.0 && v > last[j] {
                        let o = &frontier[j];
                        let lstat = &left[j * s..(j + 1) * s];
                        let rcount = o.count - left_count[j];
                        if left_count[j] >= params.min_samples_leaf && rcount >= params.min_samples_leaf {
                            for t in 0..s {
                                right[t] = o.stat[t] - lstat[t];
                            }
                            if criterion.child_ok(lstat) && criterion.child_ok(&right) {
                                let gain = criterion.score(lstat) + criterion.score(&right) - criterion.score(&o.stat);
                                if gain > MIN_GAIN && best[j].is_none_or(|b| gain > b.gain) {
                                    best[j] = Some(Candidate {
                                        gain,
                                        feature: f,
                                        threshold: midpoint(last[j], v),
                                    });
                                }
                            }
                        }
                    }
                    for t in 0..s {
                        left[j * s + t] += stats[r as usize * s + t];
                    }
                    left_count[j] += count[r as usize];
                    last[j] = v;
                }
                best
            })
            .collect();

        let mut chosen: Vec<Option<Candidate>> = vec![None; m];
        for cands in &per_feature {
            for (j, c) in cands.iter().enumerate() {
                if let Some(c) = c {
                    if chosen[j].is_none_or(|b| c.gain > b.gain) {
                        chosen[j] = Some(*c);
                    }
                }
            }
        }

        // allocate children in frontier order
        let mut child_slot = vec![(NONE, NONE); m];
        let mut next: Vec<Open> = Vec::new();
        for (j, c) in chosen.iter().enumerate() {
            if let Some(c) = c {
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes[frontier[j].node].split = Some(Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: l,
                    right: r,
                    gain: c.gain,
                });
                for child in [l, r] {
                    nodes.push(Node {
                        split: None,
                        value: Vec::new(),
                        cover: 0.0,
                    });
                    next.push(Open {
                        node: child,
                        stat: vec![0.0; s],
                        count: 0.0,
                        depth: frontier[j].depth + 1,
                        features: None,
                        splittable: false,
                    });
                }
                child_slot[j] = ((next.len() - 2) as u32, (next.len() - 1) as u32);
            }
        }
        for r in 0..n {
            let j = node_of[r];
            if j == NONE {
                continue;
            }
            let (lslot, rslot) = child_slot[j as usize];
            if lslot == NONE {
                node_of[r] = NONE;
                continue;
            }
            let c = chosen[j as usize].unwrap();
            let slot = if x[[r, c.feature]] <= c.threshold { lslot } else { rslot };
            node_of[r] = slot;
            let o = &mut next[slot as usize];
            o.count += count[r];
            for t in 0..s {
                o.stat[t] += stats[r * s + t];
            }
        }
        for o in next.iter_mut() {
            nodes[o.node].value = criterion.value(&o.stat);
            nodes[o.node].cover = o.count;
            o.features = features(o.node);
        }
        frontier = next;
    }
    Tree { nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

/// Single Gini CART over every feature, unit row weights.
pub fn train_tree(d: &Dataset, cfg: &TreeConfig) -> Result<Tree, LearnerError> {
    if d.n() == 0 {
        return Err(LearnerError::Shape("empty dataset".into()));
    }
    let sorted = Presorted::new(d.x.view());
    let mut stats = vec![0.0; d.n() * d.k];
    for (i, &c) in d.y.iter().enumerate() {
        stats[i * d.k + c] = 1.0;
    }
    Ok(grow(
        d.x.view(),
        &sorted,
        &vec![1.0; d.n()],
        &stats,
        Criterion::Gini { classes: d.k },
        GrowParams {
            max_depth: cfg.max_depth,
            min_samples_split: cfg.min_samples_split as f64,
            min_samples_leaf: cfg.min_samples_leaf as f64,
        },
        &mut |_| None,
    ))
}
