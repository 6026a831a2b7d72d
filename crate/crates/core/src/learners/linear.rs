use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_class_weights, check_width, sample_weights, softmax_rows, Dataset, LearnerError, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub penalty: Penalty,
    pub max_iter: usize,
    pub tol: f64,
    pub class_weights: Option<Vec<f64>>,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            c: 10.0,
            penalty: Penalty::L1,
            max_iter: 5000,
            tol: 1e-7,
            class_weights: None,
        }
    }
}

/// Softmax regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub config: LogRegConfig,
    pub k: usize,
    pub standardizer: Standardizer,
    /// K × d.
    pub coef: Array2<f64>,
    pub intercept: Vec<f64>,
    pub iterations: usize,
}

/// Weighted mean cross-entropy of a softmax model on `x` and its gradient
/// with respect to `(coef, intercept)`. Penalty terms are not included.
pub fn logreg_objective(
    x: ArrayView2<f64>,
    y: &[usize],
    weights: &[f64],
    coef: &Array2<f64>,
    intercept: &[f64],
) -> (f64, Array2<f64>, Vec<f64>) {
    let mut p = x.dot(&coef.t());
    for mut row in p.rows_mut() {
        for (v, b) in row.iter_mut().zip(intercept) {
            *v += b;
        }
    }
    softmax_rows(&mut p);
    let mass: f64 = weights.iter().sum();
    let mut loss = 0.0;
    for (i, &c) in y.iter().enumerate() {
        loss -= weights[i] * p[[i, c]].max(1e-12).ln();
        let wi = weights[i] / mass;
        for v in p.row_mut(i).iter_mut() {
            *v *= wi;
        }
        p[[i, c]] -= wi;
    }
    let grad_coef = p.t().dot(&x);
    let grad_b = p.sum_axis(Axis(0)).to_vec();
    (loss / mass, grad_coef, grad_b)
}

fn penalty_value(coef: &Array2<f64>, cfg: &LogRegConfig) -> f64 {
    match cfg.penalty {
        Penalty::L1 => coef.iter().map(|v| v.abs()).sum::<f64>() / cfg.c,
        Penalty::L2 => coef.iter().map(|v| v * v).sum::<f64>() / (2.0 * cfg.c),
    }
}

fn prox(v: f64, step: f64, cfg: &LogRegConfig) -> f64 {
    match cfg.penalty {
        Penalty::L1 => {
            let t = step / cfg.c;
            v.signum() * (v.abs() - t).max(0.0)
        }
        Penalty::L2 => v / (1.0 + step / cfg.c),
    }
}

/// Proximal gradient descent with backtracking from a zero start.
pub fn train_logreg(d: &Dataset, cfg: &LogRegConfig) -> Result<LinearModel, LearnerError> {
    if d.n() < d.k {
        return Err(LearnerError::Shape(format!("{} rows for {} classes", d.n(), d.k)));
    }
    d.require_two_classes()?;
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(LearnerError::Config("C must be positive".into()));
    }
    check_class_weights(cfg.class_weights.as_deref(), d.k)?;
    let standardizer = Standardizer::fit(d.x.view());
    let xs = standardizer.transform(d.x.view());
    let w = sample_weights(&d.y, cfg.class_weights.as_deref());
    let (k, dim) = (d.k, d.d());

    let mut coef = Array2::<f64>::zeros((k, dim));
    let mut intercept = vec![0.0; k];
    let (mut smooth, mut g_coef, mut g_b) = logreg_objective(xs.view(), &d.y, &w, &coef, &intercept);
    let mut objective = smooth + penalty_value(&coef, cfg);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (new_coef, new_b, new_smooth, new_obj) = loop {
            let cand_coef = Array2::from_shape_fn((k, dim), |(c, j)| prox(coef[[c, j]] - step * g_coef[[c, j]], step, cfg));
            let cand_b: Vec<f64> = intercept.iter().zip(&g_b).map(|(b, g)| b - step * g).collect();
            let (s, gc, gb) = logreg_objective(xs.view(), &d.y, &w, &cand_coef, &cand_b);
            let mut diff_sq = 0.0;
            let mut lin = 0.0;
            for ((nv, ov), gv) in cand_coef.iter().zip(coef.iter()).zip(g_coef.iter()) {
                diff_sq += (nv - ov) * (nv - ov);
                lin += gv * (nv - ov);
            }
            for ((nv, ov), gv) in cand_b.iter().zip(&intercept).zip(&g_b) {
                diff_sq += (nv - ov) * (nv - ov);
                lin += gv * (nv - ov);
            }
            if s <= smooth + lin + diff_sq / (2.0 * step) + 1e-15 || step < 1e-12 {
                let obj = s + penalty_value(&cand_coef, cfg);
                g_coef = gc;
                g_b = gb;
                break (cand_coef, cand_b, s, obj);
            }
            step *= 0.5;
        };
        if !new_obj.is_finite() {
            return Err(LearnerError::Divergence(format!("objective {new_obj} at iteration {iterations}")));
        }
        let improvement = objective - new_obj;
        coef = new_coef;
        intercept = new_b;
        smooth = new_smooth;
        objective = new_obj;
        if improvement.abs() < cfg.tol {
            break;
        }
        step *= 2.0;
    }
    for j in 0..dim {
        if standardizer.is_constant(j) {
            coef.column_mut(j).fill(0.0);
        }
    }
    Ok(LinearModel {
        config: cfg.clone(),
        k,
        standardizer,
        coef,
        intercept,
        iterations,
    })
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.coef.ncols()
    }

    pub fn decision_function(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        check_width(x, self.n_features())?;
        let xs = self.standardizer.transform(x);
        let mut z = xs.dot(&self.coef.t());
        for mut row in z.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.intercept) {
                *v += b;
            }
        }
        Ok(z)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        let mut z = self.decision_function(x)?;
        softmax_rows(&mut z);
        Ok(z)
    }

    /// Mean absolute coefficient per feature across classes, in standardized units.
    pub fn coefficient_importance(&self) -> Vec<f64> {
        self.coef
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / self.k as f64)
            .collect()
    }
}
