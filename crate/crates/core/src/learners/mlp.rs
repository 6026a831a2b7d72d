use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    argmax_rows, check_class_weights, check_width, sample_weights, softmax_rows, Dataset, LearnerError, Standardizer,
};
use crate::eval::{macro_f1, stratified_split, SplitSpec};
use crate::rng;

const INIT_STREAM: u64 = 0x1417;
const EPOCH_STREAM: u64 = 0xe90c;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation macro-F1 improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![128, 64],
            dropout: 0.2,
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: 256,
            patience: 10,
            validation_fraction: 0.1,
            class_weights: None,
            seed: 42,
        }
    }
}

/// Fully connected layer computing `x · w + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// fan_in × fan_out.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub k: usize,
    pub standardizer: Standardizer,
    pub layers: Vec<Dense>,
    pub epochs_trained: usize,
    pub best_validation_f1: Option<f64>,
}

pub(crate) fn init_layers(sizes: &[usize], seed: u64) -> Vec<Dense> {
    sizes
        .windows(2)
        .enumerate()
        .map(|(l, io)| {
            let limit = (6.0 / (io[0] + io[1]) as f64).sqrt();
            let mut r = rng::stream(seed, INIT_STREAM, l as u64);
            Dense {
                w: Array2::from_shape_fn((io[0], io[1]), |_| r.random_range(-limit..limit)),
                b: Array1::zeros(io[1]),
            }
        })
        .collect()
}

fn forward_logits(layers: &[Dense], x: ArrayView2<f64>) -> Array2<f64> {
    let mut a = x.to_owned();
    for (l, layer) in layers.iter().enumerate() {
        a = a.dot(&layer.w) + &layer.b;
        if l + 1 < layers.len() {
            a.mapv_inplace(|v| v.max(0.0));
        }
    }
    a
}

/// Forward and backward pass. `masks[l]` scales hidden layer `l` activations
/// (inverted dropout); `None` disables dropout.
fn forward_backward(
    layers: &[Dense],
    x: ArrayView2<f64>,
    y: &[usize],
    weights: &[f64],
    masks: Option<&[Array2<f64>]>,
) -> (f64, Vec<Dense>) {
    let depth = layers.len();
    let mut acts = vec![x.to_owned()];
    let mut pre = Vec::with_capacity(depth);
    for (l, layer) in layers.iter().enumerate() {
        let z = acts[l].dot(&layer.w) + &layer.b;
        if l + 1 < depth {
            let mut a = z.mapv(|v| v.max(0.0));
            if let Some(m) = masks {
                a *= &m[l];
            }
            pre.push(z);
            acts.push(a);
        } else {
            pre.push(z);
        }
    }
    let mut p = pre.pop().expect("output layer");
    softmax_rows(&mut p);
    let mass: f64 = weights.iter().sum();
    let mut loss = 0.0;
    for (i, &c) in y.iter().enumerate() {
        loss -= weights[i] * p[[i, c]].max(1e-12).ln();
        let wi = weights[i] / mass;
        p.row_mut(i).mapv_inplace(|v| v * wi);
        p[[i, c]] -= wi;
    }
    let mut delta = p;
    let mut grads = Vec::with_capacity(depth);
    for l in (0..depth).rev() {
        grads.push(Dense {
            w: acts[l].t().dot(&delta),
            b: delta.sum_axis(Axis(0)),
        });
        if l > 0 {
            let mut back = delta.dot(&layers[l].w.t());
            if let Some(m) = masks {
                back *= &m[l - 1];
            }
            back.zip_mut_with(&pre[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = back;
        }
    }
    grads.reverse();
    (loss / mass, grads)
}

/// Weighted mean cross-entropy and parameter gradients with dropout disabled.
/// `x` must already be standardized.
pub fn mlp_loss_and_grad(layers: &[Dense], x: ArrayView2<f64>, y: &[usize], weights: &[f64]) -> (f64, Vec<Dense>) {
    forward_backward(layers, x, y, weights, None)
}

pub(crate) struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
    lr: f64,
}

impl Adam {
    pub(crate) fn new(layers: &[Dense], lr: f64) -> Self {
        let zeros: Vec<Dense> = layers
            .iter()
            .map(|l| Dense {
                w: Array2::zeros(l.w.raw_dim()),
                b: Array1::zeros(l.b.raw_dim()),
            })
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    pub(crate) fn step(&mut self, layers: &mut [Dense], grads: &[Dense]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        };
        for (l, layer) in layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.w)
                .and(&grads[l].w)
                .and(&mut self.m[l].w)
                .and(&mut self.v[l].w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&grads[l].b)
                .and(&mut self.m[l].b)
                .and(&mut self.v[l].b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

pub fn train_mlp(d: &Dataset, cfg: &MlpConfig) -> Result<MlpModel, LearnerError> {
    if d.n() == 0 {
        return Err(LearnerError::Shape("empty dataset".into()));
    }
    if !(0.0..1.0).contains(&cfg.dropout) || cfg.batch_size == 0 || cfg.hidden.iter().any(|&h| h == 0) {
        return Err(LearnerError::Config("dropout in [0, 1), positive batch and layer sizes required".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) || !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(LearnerError::Config("learning rate must be positive and validation fraction in [0, 1)".into()));
    }
    check_class_weights(cfg.class_weights.as_deref(), d.k)?;
    d.require_two_classes()?;
    let standardizer = Standardizer::fit(d.x.view());
    let xs = standardizer.transform(d.x.view());
    let mut sizes = vec![d.d()];
    sizes.extend(&cfg.hidden);
    sizes.push(d.k);
    let mut layers = init_layers(&sizes, cfg.seed);

    let split = (cfg.validation_fraction > 0.0)
        .then(|| {
            let spec = SplitSpec {
                ratio: 1.0 - cfg.validation_fraction,
                seed: cfg.seed,
                stratified: true,
            };
            stratified_split(&d.y, &spec).ok()
        })
        .flatten();
    let (train_idx, val_idx) = split.unwrap_or_else(|| ((0..d.n()).collect(), Vec::new()));
    let x_val = xs.select(Axis(0), &val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| d.y[i]).collect();
    let w_all = sample_weights(&d.y, cfg.class_weights.as_deref());

    let keep = 1.0 - cfg.dropout;
    let mut adam = Adam::new(&layers, cfg.learning_rate);
    let mut best: Option<(f64, Vec<Dense>, usize)> = None;
    let mut stale = 0;
    let mut epochs = 0;
    for epoch in 0..cfg.max_epochs {
        epochs = epoch + 1;
        let mut r = rng::stream(cfg.seed, EPOCH_STREAM, epoch as u64);
        let order = rng::shuffled(train_idx.len(), &mut r);
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<usize> = chunk.iter().map(|&o| train_idx[o]).collect();
            let xb = xs.select(Axis(0), &rows);
            let yb: Vec<usize> = rows.iter().map(|&i| d.y[i]).collect();
            let wb: Vec<f64> = rows.iter().map(|&i| w_all[i]).collect();
            let masks: Option<Vec<Array2<f64>>> = (cfg.dropout > 0.0).then(|| {
                cfg.hidden
                    .iter()
                    .map(|&h| {
                        Array2::from_shape_fn((rows.len(), h), |_| {
                            if r.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            });
            let (loss, grads) = forward_backward(&layers, xb.view(), &yb, &wb, masks.as_deref());
            if !loss.is_finite() {
                return Err(LearnerError::Divergence(format!("loss {loss} in epoch {epoch}")));
            }
            adam.step(&mut layers, &grads);
        }
        if val_idx.is_empty() {
            continue;
        }
        let pred = argmax_rows(forward_logits(&layers, x_val.view()).view());
        let f1 = macro_f1(&y_val, &pred, d.k).map_err(|e| LearnerError::Numeric(e.to_string()))?;
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
    Ok(MlpModel {
        config: cfg.clone(),
        k: d.k,
        standardizer,
        layers,
        epochs_trained,
        best_validation_f1,
    })
}

impl MlpModel {
    pub fn n_features(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        check_width(x, self.n_features())?;
        let xs = self.standardizer.transform(x);
        let mut z = forward_logits(&self.layers, xs.view());
        softmax_rows(&mut z);
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Address;

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut r = rng::rng_from(seed);
        let x = Array2::from_shape_fn((n, 6), |(i, j)| if j == i % 3 { 2.0 } else { 0.0 } + r.random_range(-1.0..1.0));
        let y = (0..n).map(|i| i % 3).collect();
        let addrs = (0..n).map(|i| Address::from_tag(5, i as u64)).collect();
        Dataset::new(x, y, addrs, 3).unwrap()
    }

    #[test]
    fn gradient_check() {
        let d = blobs(5, 1);
        let layers = init_layers(&[6, 7, 5, 3], 3);
        let w = vec![1.0, 2.0, 1.0, 0.5, 1.0];
        let (_, grads) = mlp_loss_and_grad(&layers, d.x.view(), &d.y, &w);
        let h = 1e-6;
        let loss_at = |ls: &[Dense]| mlp_loss_and_grad(ls, d.x.view(), &d.y, &w).0;
        let mut worst: f64 = 0.0;
        for l in 0..layers.len() {
            for idx in 0..layers[l].w.len() {
                let (i, j) = (idx / layers[l].w.ncols(), idx % layers[l].w.ncols());
                let mut p = layers.clone();
                p[l].w[[i, j]] += h;
                let mut m = layers.clone();
                m[l].w[[i, j]] -= h;
                let fd = (loss_at(&p) - loss_at(&m)) / (2.0 * h);
                let an = grads[l].w[[i, j]];
                worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-7));
            }
            for j in 0..layers[l].b.len() {
                let mut p = layers.clone();
                p[l].b[j] += h;
                let mut m = layers.clone();
                m[l].b[j] -= h;
                let fd = (loss_at(&p) - loss_at(&m)) / (2.0 * h);
                let an = grads[l].b[j];
                worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-7));
            }
        }
        assert!(worst < 1e-4, "relative error {worst}");
    }

    #[test]
    fn zero_epochs_near_uniform() {
        let d = blobs(90, 2);
        let m = train_mlp(&d, &MlpConfig { max_epochs: 0, ..MlpConfig::default() }).unwrap();
        let p = m.predict_proba(d.x.view()).unwrap();
        let dev: Vec<f64> = p.iter().map(|v| (v - 1.0 / 3.0).abs()).collect();
        let mean = dev.iter().sum::<f64>() / dev.len() as f64;
        let worst = dev.iter().copied().fold(0.0, f64::max);
        assert!(mean < 0.1 && worst < 1.0 / 3.0, "mean {mean} worst {worst}");
    }

    #[test]
    fn learns_blobs_deterministically() {
        let d = blobs(300, 4);
        let cfg = MlpConfig {
            max_epochs: 40,
            batch_size: 32,
            ..MlpConfig::default()
        };
        let a = train_mlp(&d, &cfg).unwrap();
        let b = train_mlp(&d, &cfg).unwrap();
        assert_eq!(a, b);
        let pred = argmax_rows(a.predict_proba(d.x.view()).unwrap().view());
        assert!(macro_f1(&d.y, &pred, 3).unwrap() > 0.9);
    }
}
