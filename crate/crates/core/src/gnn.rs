//! Two-layer GraphSAGE node classifier with mean aggregation, trained
//! full-batch on the wallet transaction graph.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{macro_f1, stratified_split, SplitSpec};
use crate::features::FeatureMatrix;
use crate::graph::TransactionGraph;
use crate::ingest::Address;
use crate::learners::{argmax_rows, init_layers, softmax_rows, Adam, Dense, Standardizer};
use crate::rng;

const INIT_STREAM: u64 = 0x5a6e;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("no feature row for graph node {0}")]
    MissingFeatures(Address),
    #[error("expected width {expected}, got {found}")]
    Width { expected: usize, found: usize },
    #[error("no labeled training nodes")]
    DegenerateLabels,
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageConfig {
    pub hidden: usize,
    /// Neighbors kept per node, highest combined volume first.
    pub fanout: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SageConfig {
    fn default() -> Self {
        SageConfig {
            hidden: 64,
            fanout: 25,
            learning_rate: 1e-2,
            max_epochs: 300,
            patience: 20,
            validation_fraction: 0.1,
            class_weights: None,
            seed: 42,
        }
    }
}

/// Neighbor lists used for aggregation, each sorted by node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SageGraph {
    neighbors: Vec<Vec<usize>>,
}

impl SageGraph {
    pub fn from_graph(g: &TransactionGraph, fanout: usize) -> Self {
        let neighbors = (0..g.node_count())
            .map(|v| {
                let mut nb: Vec<(usize, u128)> = g.undirected_neighbors(v).to_vec();
                if nb.len() > fanout {
                    nb.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                    nb.truncate(fanout);
                }
                let mut ids: Vec<usize> = nb.into_iter().map(|(n, _)| n).collect();
                ids.sort_unstable();
                ids
            })
            .collect();
        SageGraph { neighbors }
    }

    /// Lists are sorted, deduplicated and stripped of self-loops.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let neighbors = lists
            .into_iter()
            .enumerate()
            .map(|(v, mut l)| {
                l.retain(|&u| u != v);
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect();
        SageGraph { neighbors }
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Element-wise mean of `h[u]` over `neighbors`, summed in ascending node
/// order; an empty neighborhood gives the zero vector.
pub fn mean_aggregate(h: &[Vec<f64>], neighbors: &[usize], width: usize) -> Result<Vec<f64>, GnnError> {
    let mut order = neighbors.to_vec();
    order.sort_unstable();
    let mut out = vec![0.0; width];
    for &u in &order {
        if h[u].len() != width {
            return Err(GnnError::Width {
                expected: width,
                found: h[u].len(),
            });
        }
        for (o, v) in out.iter_mut().zip(&h[u]) {
            *o += v;
        }
    }
    if !order.is_empty() {
        let n = order.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

fn aggregate(g: &SageGraph, h: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for (v, nb) in g.neighbors.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let mut row = out.row_mut(v);
        for &u in nb {
            row += &h.row(u);
        }
        row /= nb.len() as f64;
    }
    out
}

fn aggregate_transpose(g: &SageGraph, d: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(d.raw_dim());
    for (v, nb) in g.neighbors.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let scaled = &d.row(v) / nb.len() as f64;
        for &u in nb {
            let mut row = out.row_mut(u);
            row += &scaled;
        }
    }
    out
}

/// `layers` holds the two convolutions followed by the output projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageModel {
    pub config: SageConfig,
    pub k: usize,
    pub n_features: usize,
    pub standardizer: Standardizer,
    pub layers: Vec<Dense>,
    pub epochs_trained: usize,
    pub best_validation_f1: Option<f64>,
}

struct Cache {
    concat: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    top: Array2<f64>,
}

fn forward(layers: &[Dense], g: &SageGraph, x: ArrayView2<f64>) -> (Array2<f64>, Cache) {
    let mut h = x.to_owned();
    let mut concat = Vec::with_capacity(2);
    let mut pre = Vec::with_capacity(2);
    for layer in &layers[..layers.len() - 1] {
        let agg = aggregate(g, &h);
        let c = concatenate(Axis(1), &[h.view(), agg.view()]).expect("equal row counts");
        let z = c.dot(&layer.w) + &layer.b;
        h = z.mapv(|v| v.max(0.0));
        concat.push(c);
        pre.push(z);
    }
    let out = layers.last().expect("output layer");
    let logits = h.dot(&out.w) + &out.b;
    (logits, Cache { concat, pre, top: h })
}

/// Weighted mean cross-entropy over `train` (node, class) pairs and its
/// gradient for every layer. `x` must already be standardized.
pub fn sage_loss_and_grad(
    layers: &[Dense],
    g: &SageGraph,
    x: ArrayView2<f64>,
    train: &[(usize, usize)],
    class_weights: Option<&[f64]>,
) -> (f64, Vec<Dense>) {
    let (logits, cache) = forward(layers, g, x);
    let mut p = logits;
    softmax_rows(&mut p);
    let w = |c: usize| class_weights.map_or(1.0, |cw| cw[c]);
    let mass: f64 = train.iter().map(|&(_, c)| w(c)).sum();
    let mut loss = 0.0;
    let mut delta = Array2::<f64>::zeros(p.raw_dim());
    for &(v, c) in train {
        loss -= w(c) * p[[v, c]].max(1e-12).ln();
        let scale = w(c) / mass;
        for j in 0..p.ncols() {
            delta[[v, j]] += scale * (p[[v, j]] - (j == c) as u8 as f64);
        }
    }
    let depth = layers.len();
    let mut grads = Vec::with_capacity(depth);
    grads.push(Dense {
        w: cache.top.t().dot(&delta),
        b: delta.sum_axis(Axis(0)),
    });
    let mut dh = delta.dot(&layers[depth - 1].w.t());
    for l in (0..depth - 1).rev() {
        dh.zip_mut_with(&cache.pre[l], |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        grads.push(Dense {
            w: cache.concat[l].t().dot(&dh),
            b: dh.sum_axis(Axis(0)),
        });
        if l > 0 {
            let dc = dh.dot(&layers[l].w.t());
            let width = dc.ncols() / 2;
            let back = aggregate_transpose(g, dc.slice(s![.., width..]));
            dh = &dc.slice(s![.., ..width]) + &back;
        }
    }
    grads.reverse();
    (loss / mass, grads)
}

/// Node feature matrix aligned with graph node ids.
pub fn node_features(g: &TransactionGraph, m: &FeatureMatrix) -> Result<Array2<f64>, GnnError> {
    let width = m.rows.first().map_or(0, |r| r.as_slice().len());
    let mut x = Array2::zeros((g.node_count(), width));
    for (v, addr) in g.nodes().iter().enumerate() {
        let row = m.get(addr).ok_or(GnnError::MissingFeatures(*addr))?;
        x.row_mut(v).assign(&ndarray::ArrayView1::from(row.as_slice()));
    }
    Ok(x)
}

fn initial_layers(d: usize, k: usize, cfg: &SageConfig) -> Vec<Dense> {
    let shapes = [(2 * d, cfg.hidden), (2 * cfg.hidden, cfg.hidden), (cfg.hidden, k)];
    shapes
        .iter()
        .enumerate()
        .map(|(l, &(i, o))| {
            init_layers(&[i, o], rng::derive_seed(cfg.seed, INIT_STREAM, l as u64))
                .pop()
                .expect("one layer")
        })
        .collect()
}

/// Trains on the labeled `train` (node, class) pairs only; no other label is
/// visible to this function.
pub fn train_sage(
    g: &SageGraph,
    x: ArrayView2<f64>,
    train: &[(usize, usize)],
    k: usize,
    cfg: &SageConfig,
) -> Result<SageModel, GnnError> {
    if train.is_empty() {
        return Err(GnnError::DegenerateLabels);
    }
    if x.nrows() != g.node_count() {
        return Err(GnnError::Width {
            expected: g.node_count(),
            found: x.nrows(),
        });
    }
    if train.iter().any(|&(v, c)| v >= g.node_count() || c >= k) {
        return Err(GnnError::Config("training pair out of range".into()));
    }
    if cfg.hidden == 0 || !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(GnnError::Config("hidden width and learning rate must be positive".into()));
    }
    let train_rows: Vec<usize> = train.iter().map(|&(v, _)| v).collect();
    let standardizer = Standardizer::fit(x.select(Axis(0), &train_rows).view());
    let xs = standardizer.transform(x);
    let mut layers = initial_layers(x.ncols(), k, cfg);

    let labels: Vec<usize> = train.iter().map(|&(_, c)| c).collect();
    let split = (cfg.validation_fraction > 0.0)
        .then(|| {
            let spec = SplitSpec {
                ratio: 1.0 - cfg.validation_fraction,
                seed: cfg.seed,
                stratified: true,
            };
            stratified_split(&labels, &spec).ok()
        })
        .flatten();
    let (fit, val): (Vec<(usize, usize)>, Vec<(usize, usize)>) = match split {
        Some((a, b)) => (a.iter().map(|&i| train[i]).collect(), b.iter().map(|&i| train[i]).collect()),
        None => (train.to_vec(), Vec::new()),
    };
    let y_val: Vec<usize> = val.iter().map(|&(_, c)| c).collect();

    let mut adam = Adam::new(&layers, cfg.learning_rate);
    let mut best: Option<(f64, Vec<Dense>, usize)> = None;
    let mut stale = 0;
    let mut epochs = 0;
    for epoch in 0..cfg.max_epochs {
        epochs = epoch + 1;
        let (loss, grads) = sage_loss_and_grad(&layers, g, xs.view(), &fit, cfg.class_weights.as_deref());
        if !loss.is_finite() {
            return Err(GnnError::Divergence(format!("loss {loss} in epoch {epoch}")));
        }
        adam.step(&mut layers, &grads);
        if val.is_empty() {
            continue;
        }
        let (logits, _) = forward(&layers, g, xs.view());
        let pred_all = argmax_rows(logits.view());
        let pred: Vec<usize> = val.iter().map(|&(v, _)| pred_all[v]).collect();
        let f1 = macro_f1(&y_val, &pred, k).map_err(|e| GnnError::Config(e.to_string()))?;
        if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
            best = Some((f1, layers.clone(), epochs));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_validation_f1, epochs_trained) = match best {
        Some((f1, best_layers, at)) => {
            layers = best_layers;
            (Some(f1), at)
        }
        None => (None, epochs),
    };
    Ok(SageModel {
        config: cfg.clone(),
        k,
        n_features: x.ncols(),
        standardizer,
        layers,
        epochs_trained,
        best_validation_f1,
    })
}

/// Class probabilities for every node of `g`.
pub fn sage_forward(m: &SageModel, g: &SageGraph, x: ArrayView2<f64>) -> Result<Array2<f64>, GnnError> {
    if x.ncols() != m.n_features {
        return Err(GnnError::Width {
            expected: m.n_features,
            found: x.ncols(),
        });
    }
    if x.nrows() != g.node_count() {
        return Err(GnnError::Width {
            expected: g.node_count(),
            found: x.nrows(),
        });
    }
    let xs = m.standardizer.transform(x);
    let (mut p, _) = forward(&m.layers, g, xs.view());
    softmax_rows(&mut p);
    Ok(p)
}

/// As [`sage_forward`], looking up each node's row in a feature matrix.
pub fn sage_predict(m: &SageModel, graph: &TransactionGraph, features: &FeatureMatrix) -> Result<Array2<f64>, GnnError> {
    let x = node_features(graph, features)?;
    sage_forward(m, &SageGraph::from_graph(graph, m.config.fanout), x.view())
}
