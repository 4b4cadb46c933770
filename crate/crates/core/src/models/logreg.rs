//! Multinomial logistic regression trained by full-batch gradient
//! descent with backtracking line search.
//!
//! Targets are per-row probability distributions, so single-label,
//! multi-label (uniform over the set), and weighted rows all share one
//! loss: weighted softmax cross-entropy plus (lambda/2)*||W||^2 with the
//! bias left unregularized.

use ndarray::{Array1, Array2};

use super::optimize::{gradient_descent, GdOptions};
use super::{softmax_rows, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LinearModel {
    /// classes x dim
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub lambda: f64,
    pub classes: Vec<String>,
}

impl LinearModel {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let logits = x.dot(&self.weights.t()) + &self.bias;
        softmax_rows(&logits)
    }
}

pub struct FitOptions {
    pub gd: GdOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            gd: GdOptions::default(),
        }
    }
}

pub struct FitTrace {
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub final_grad_inf_norm: f64,
}

fn pack(weights: &Array2<f64>, bias: &Array1<f64>) -> Vec<f64> {
    let mut flat: Vec<f64> = weights.iter().cloned().collect();
    flat.extend(bias.iter());
    flat
}

fn unpack(flat: &[f64], classes: usize, dim: usize) -> (Array2<f64>, Array1<f64>) {
    let weights = Array2::from_shape_vec((classes, dim), flat[..classes * dim].to_vec()).unwrap();
    let bias = Array1::from(flat[classes * dim..].to_vec());
    (weights, bias)
}

/// Weighted softmax cross-entropy + L2 loss and its analytic gradient,
/// over flattened (weights, bias). Public within the crate so the
/// finite-difference tests can call it directly.
pub fn loss_and_grad(flat: &[f64], data: &LabeledDataset, lambda: f64) -> (f64, Vec<f64>) {
    let classes = data.classes.len();
    let dim = data.dim();
    let (weights, bias) = unpack(flat, classes, dim);
    let logits = data.x.dot(&weights.t()) + &bias;
    let proba = softmax_rows(&logits);

    let weight_sum: f64 = data.weights.sum();
    let mut loss = 0.0;
    for i in 0..data.rows() {
        let mut row_ce = 0.0;
        for c in 0..classes {
            let t = data.targets[[i, c]];
            if t > 0.0 {
                row_ce -= t * proba[[i, c]].max(1e-300).ln();
            }
        }
        loss += data.weights[i] * row_ce;
    }
    loss /= weight_sum;
    loss += 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();

    // grad_W = (1/sum w) (P - T)^T diag(w) X + lambda W
    let mut residual = &proba - &data.targets;
    for (i, mut row) in residual.rows_mut().into_iter().enumerate() {
        let w = data.weights[i] / weight_sum;
        row.mapv_inplace(|v| v * w);
    }
    let grad_w = residual.t().dot(&data.x) + &(lambda * &weights);
    let grad_b = residual.sum_axis(ndarray::Axis(0));

    (loss, pack(&grad_w, &grad_b))
}

/// Fit from zero initialization; deterministic.
pub fn fit_logreg(
    data: &LabeledDataset,
    lambda: f64,
    opts: &FitOptions,
) -> Result<(LinearModel, FitTrace)> {
    let classes = data.classes.len();
    if classes < 2 {
        return Err(Error::Model("need at least 2 classes".into()));
    }
    let present = (0..classes)
        .filter(|&c| data.targets.column(c).sum() > 0.0)
        .count();
    if present < 2 {
        return Err(Error::Model(
            "degenerate input: fewer than 2 classes have training mass".into(),
        ));
    }
    if data.weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::Model("sample weights must be positive".into()));
    }
    let dim = data.dim();
    let flat0 = vec![0.0; classes * dim + classes];
    let result = gradient_descent(flat0, |p| loss_and_grad(p, data, lambda), &opts.gd)?;
    let (weights, bias) = unpack(&result.params, classes, dim);
    Ok((
        LinearModel {
            weights,
            bias,
            lambda,
            classes: data.classes.clone(),
        },
        FitTrace {
            loss_trace: result.loss_trace,
            iterations: result.iterations,
            final_grad_inf_norm: result.final_grad_inf_norm,
        },
    ))
}
