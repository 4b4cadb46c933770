//! Complement naive Bayes (Rennie et al. 2003).
//!
//! Per-class parameters are estimated from every OTHER class's feature
//! counts, which keeps skewed class distributions from starving rare
//! classes. Requires nonnegative features; the natural input here is the
//! softmax of the backend's logits.

use ndarray::{Array1, Array2};

use super::{softmax_rows, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CnbModel {
    /// classes x dim, the L2-normalized complement log-weights.
    pub log_weights: Array2<f64>,
    pub alpha: f64,
    pub classes: Vec<String>,
}

impl CnbModel {
    /// score(x, c) = -sum_i x_i * w_ci; higher is better.
    pub fn scores(&self, x: &Array2<f64>) -> Array2<f64> {
        -x.dot(&self.log_weights.t())
    }

    /// Softmax over scores, for the uniform probability contract. The
    /// argmax matches `scores`.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        softmax_rows(&self.scores(x))
    }
}

/// Single pass over the data: total feature sums minus per-class sums
/// give the complement counts.
pub fn fit_cnb(data: &LabeledDataset, alpha: f64) -> Result<CnbModel> {
    if alpha <= 0.0 {
        return Err(Error::Model("alpha must be positive".into()));
    }
    if data.x.iter().any(|&v| v < 0.0) {
        return Err(Error::Model(
            "complement NB requires nonnegative features".into(),
        ));
    }
    let classes = data.classes.len();
    let dim = data.dim();
    let labels = data.label_names();

    let mut class_feature_sums = Array2::<f64>::zeros((classes, dim));
    let mut total_feature_sums = Array1::<f64>::zeros(dim);
    for (i, row) in data.x.rows().into_iter().enumerate() {
        let c = data.classes.iter().position(|x| *x == labels[i]).unwrap();
        for (j, &v) in row.iter().enumerate() {
            class_feature_sums[[c, j]] += v;
            total_feature_sums[j] += v;
        }
    }
    let total_sum: f64 = total_feature_sums.sum();

    let mut log_weights = Array2::<f64>::zeros((classes, dim));
    for c in 0..classes {
        let complement_total = total_sum - class_feature_sums.row(c).sum();
        let denom = alpha * dim as f64 + complement_total;
        for j in 0..dim {
            let complement_count = total_feature_sums[j] - class_feature_sums[[c, j]];
            let theta = (alpha + complement_count) / denom;
            log_weights[[c, j]] = theta.ln();
        }
        // per-class L2 normalization of the weight vector
        let norm: f64 = log_weights
            .row(c)
            .iter()
            .map(|w| w * w)
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for j in 0..dim {
                log_weights[[c, j]] /= norm;
            }
        }
    }

    Ok(CnbModel {
        log_weights,
        alpha,
        classes: data.classes.clone(),
    })
}
