//! One-vs-rest multi-label wrapper: an independent binary logistic
//! model per class. Per-class outputs are sigmoids, not normalized
//! across classes.

use ndarray::{Array1, Array2};

use super::optimize::{gradient_descent, GdOptions};
use super::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BinaryLogistic {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl BinaryLogistic {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array1<f64> {
        let z = x.dot(&self.weights) + self.bias;
        z.mapv(|v| 1.0 / (1.0 + (-v).exp()))
    }
}

#[derive(Debug, Clone)]
pub struct OvrModel {
    /// One model per class; `None` for classes skipped at fit time.
    pub models: Vec<Option<BinaryLogistic>>,
    pub classes: Vec<String>,
    pub lambda: f64,
    /// Classes with no positive examples, reported rather than trained.
    pub skipped: Vec<String>,
}

impl OvrModel {
    /// Independent per-class sigmoid probabilities; skipped classes
    /// predict 0.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.classes.len()));
        for (c, model) in self.models.iter().enumerate() {
            if let Some(m) = model {
                let p = m.predict_proba(x);
                for (i, &v) in p.iter().enumerate() {
                    out[[i, c]] = v;
                }
            }
        }
        out
    }
}

fn binary_loss_and_grad(
    flat: &[f64],
    x: &Array2<f64>,
    y: &[f64],
    lambda: f64,
) -> (f64, Vec<f64>) {
    let dim = x.ncols();
    let weights = Array1::from(flat[..dim].to_vec());
    let bias = flat[dim];
    let z = x.dot(&weights) + bias;
    let n = x.nrows() as f64;
    let mut loss = 0.0;
    let mut residual = Array1::zeros(x.nrows());
    for (i, &zi) in z.iter().enumerate() {
        let p = 1.0 / (1.0 + (-zi).exp());
        // log-loss via the stable log1p form
        loss += if y[i] > 0.5 {
            (1.0 + (-zi).exp()).ln()
        } else {
            (1.0 + zi.exp()).ln()
        };
        residual[i] = p - y[i];
    }
    loss = loss / n + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let grad_w = x.t().dot(&residual) / n + &(lambda * &weights);
    let grad_b = residual.sum() / n;
    let mut grad: Vec<f64> = grad_w.iter().cloned().collect();
    grad.push(grad_b);
    (loss, grad)
}

/// A row counts as positive for every class carrying target mass.
pub fn fit_ovr(data: &LabeledDataset, lambda: f64) -> Result<OvrModel> {
    let mut models = Vec::with_capacity(data.classes.len());
    let mut skipped = Vec::new();
    for (c, class) in data.classes.iter().enumerate() {
        let y: Vec<f64> = (0..data.rows())
            .map(|i| if data.targets[[i, c]] > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let positives = y.iter().filter(|&&v| v > 0.5).count();
        if positives == 0 {
            skipped.push(class.clone());
            models.push(None);
            continue;
        }
        let flat0 = vec![0.0; data.dim() + 1];
        let result = gradient_descent(
            flat0,
            |p| binary_loss_and_grad(p, &data.x, &y, lambda),
            &GdOptions::default(),
        )?;
        let dim = data.dim();
        models.push(Some(BinaryLogistic {
            weights: Array1::from(result.params[..dim].to_vec()),
            bias: result.params[dim],
        }));
    }
    if models.iter().all(|m| m.is_none()) {
        return Err(Error::Model("no class has positive examples".into()));
    }
    Ok(OvrModel {
        models,
        classes: data.classes.clone(),
        lambda,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, Variant};
    use crate::models::logreg::{fit_logreg, FitOptions};

    #[test]
    fn agrees_with_multinomial_on_separable_data() {
        let data = crate::models::logreg::test_support::blobs(50, 3, 2.0, 21);
        let ovr = fit_ovr(&data, 1e-4).unwrap();
        let (multi, _) = fit_logreg(&data, 1e-4, &FitOptions::default()).unwrap();
        let p_ovr = ovr.predict_proba(&data.x);
        let p_multi = multi.predict_proba(&data.x);
        let mut agree = 0;
        for i in 0..data.rows() {
            let a = p_ovr.row(i).iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0;
            let b = p_multi.row(i).iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0;
            if a == b {
                agree += 1;
            }
        }
        assert!(agree as f64 / data.rows() as f64 >= 0.95);
        for p in p_ovr.iter() {
            assert!((0.0..=1.0).contains(p));
        }
    }

    #[test]
    fn absent_class_is_skipped_with_zero_probability() {
        let features: Vec<FeatureVector> = (0..20)
            .map(|i| FeatureVector {
                values: vec![i as f64 / 10.0 - 1.0],
                variant: Variant::M1,
                labels: vec![if i < 10 { "a".into() } else { "b".into() }],
                weight: 1.0,
            })
            .collect();
        // class list includes "ghost" with no examples
        let data = LabeledDataset::from_features(
            &features,
            Some(vec!["a".into(), "b".into(), "ghost".into()]),
        )
        .unwrap();
        let ovr = fit_ovr(&data, 0.01).unwrap();
        assert_eq!(ovr.skipped, vec!["ghost"]);
        let p = ovr.predict_proba(&data.x);
        assert!(p.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn multilabel_rows_are_positive_for_every_label() {
        let features = vec![
            FeatureVector {
                values: vec![1.0, 0.0],
                variant: Variant::M1,
                labels: vec!["a".into(), "b".into()],
                weight: 0.5,
            },
            FeatureVector {
                values: vec![0.0, 1.0],
                variant: Variant::M1,
                labels: vec!["c".into()],
                weight: 1.0,
            },
        ];
        let data = LabeledDataset::from_features(&features, None).unwrap();
        let ovr = fit_ovr(&data, 0.1).unwrap();
        // a and b both trained (one positive each from the shared row)
        assert!(ovr.skipped.is_empty());
        assert!(ovr.models.iter().all(|m| m.is_some()));
    }
}
