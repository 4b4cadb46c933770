//! One-hidden-layer perceptron: ReLU activation, softmax output,
//! mini-batch SGD on cross-entropy with seeded init and shuffling.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{softmax_rows, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MlpModel {
    /// hidden x dim
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// classes x hidden
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub classes: Vec<String>,
}

impl MlpModel {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let hidden = (x.dot(&self.w1.t()) + &self.b1).mapv(|v| v.max(0.0));
        let logits = hidden.dot(&self.w2.t()) + &self.b2;
        softmax_rows(&logits)
    }
}

pub struct MlpOptions {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        MlpOptions {
            hidden: 16,
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

pub(crate) fn unpack(
    flat: &[f64],
    dim: usize,
    hidden: usize,
    classes: Vec<String>,
) -> MlpModel {
    let c = classes.len();
    let mut offset = 0;
    let w1 = Array2::from_shape_vec((hidden, dim), flat[..hidden * dim].to_vec()).unwrap();
    offset += hidden * dim;
    let b1 = Array1::from(flat[offset..offset + hidden].to_vec());
    offset += hidden;
    let w2 = Array2::from_shape_vec((c, hidden), flat[offset..offset + c * hidden].to_vec()).unwrap();
    offset += c * hidden;
    let b2 = Array1::from(flat[offset..offset + c].to_vec());
    MlpModel {
        w1,
        b1,
        w2,
        b2,
        classes,
    }
}

/// Mean cross-entropy over the given rows plus backprop gradient in the
/// flat layout. Also the target of the finite-difference check.
pub fn loss_and_grad(
    flat: &[f64],
    data: &LabeledDataset,
    rows: &[usize],
    hidden: usize,
) -> (f64, Vec<f64>) {
    let dim = data.dim();
    let model = unpack(flat, dim, hidden, data.classes.clone());
    let x = ndarray::stack(
        ndarray::Axis(0),
        &rows.iter().map(|&i| data.x.row(i)).collect::<Vec<_>>(),
    )
    .unwrap();
    let targets = ndarray::stack(
        ndarray::Axis(0),
        &rows.iter().map(|&i| data.targets.row(i)).collect::<Vec<_>>(),
    )
    .unwrap();
    let n = rows.len() as f64;

    let pre = x.dot(&model.w1.t()) + &model.b1;
    let hidden_act = pre.mapv(|v| v.max(0.0));
    let logits = hidden_act.dot(&model.w2.t()) + &model.b2;
    let proba = softmax_rows(&logits);

    let mut loss = 0.0;
    for i in 0..rows.len() {
        for c in 0..data.classes.len() {
            let t = targets[[i, c]];
            if t > 0.0 {
                loss -= t * proba[[i, c]].max(1e-300).ln();
            }
        }
    }
    loss /= n;

    let delta_out = (&proba - &targets) / n;
    let grad_w2 = delta_out.t().dot(&hidden_act);
    let grad_b2 = delta_out.sum_axis(ndarray::Axis(0));
    let mut delta_hidden = delta_out.dot(&model.w2);
    ndarray::Zip::from(&mut delta_hidden)
        .and(&pre)
        .for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
    let grad_w1 = delta_hidden.t().dot(&x);
    let grad_b1 = delta_hidden.sum_axis(ndarray::Axis(0));

    let mut grad: Vec<f64> = grad_w1.iter().cloned().collect();
    grad.extend(grad_b1.iter());
    grad.extend(grad_w2.iter());
    grad.extend(grad_b2.iter());
    (loss, grad)
}

/// Seeded He-style init.
pub fn init_params(dim: usize, hidden: usize, classes: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale1 = (2.0 / dim as f64).sqrt();
    let scale2 = (2.0 / hidden as f64).sqrt();
    let mut flat = Vec::with_capacity(hidden * dim + hidden + classes * hidden + classes);
    for _ in 0..hidden * dim {
        flat.push(rng.gen_range(-1.0..1.0) * scale1);
    }
    flat.extend(std::iter::repeat(0.0).take(hidden));
    for _ in 0..classes * hidden {
        flat.push(rng.gen_range(-1.0..1.0) * scale2);
    }
    flat.extend(std::iter::repeat(0.0).take(classes));
    flat
}

/// Returns the model and the per-epoch mean training loss curve.
pub fn fit_mlp(data: &LabeledDataset, opts: &MlpOptions) -> Result<(MlpModel, Vec<f64>)> {
    if opts.hidden < 1 {
        return Err(Error::Model("hidden width must be >= 1".into()));
    }
    let dim = data.dim();
    let classes = data.classes.len();
    let mut flat = init_params(dim, opts.hidden, classes, opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut curve = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(opts.batch_size.max(1)) {
            let (loss, grad) = loss_and_grad(&flat, data, batch, opts.hidden);
            if !loss.is_finite() {
                return Err(Error::Model(format!(
                    "non-finite loss at epoch {epoch}, batch {batches} (lr {})",
                    opts.learning_rate
                )));
            }
            for (p, g) in flat.iter_mut().zip(&grad) {
                *p -= opts.learning_rate * g;
            }
            epoch_loss += loss;
            batches += 1;
        }
        curve.push(epoch_loss / batches as f64);
    }

    Ok((unpack(&flat, dim, opts.hidden, data.classes.clone()), curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, Variant};
    use crate::models::optimize::finite_difference_gradient;

    fn xor_dataset(n_per_cell: usize) -> LabeledDataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut features = Vec::new();
        for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let label = if (a as i32) ^ (b as i32) == 1 { "one" } else { "zero" };
            for _ in 0..n_per_cell {
                features.push(FeatureVector {
                    values: vec![
                        a + rng.gen_range(-0.1..0.1),
                        b + rng.gen_range(-0.1..0.1),
                    ],
                    variant: Variant::M1,
                    labels: vec![label.to_string()],
                    weight: 1.0,
                });
            }
        }
        LabeledDataset::from_features(&features, None).unwrap()
    }

    fn accuracy(model: &MlpModel, data: &LabeledDataset) -> f64 {
        let proba = model.predict_proba(&data.x);
        let truth = data.label_names();
        let mut correct = 0;
        for (i, row) in proba.rows().into_iter().enumerate() {
            let c = row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            if model.classes[c] == truth[i] {
                correct += 1;
            }
        }
        correct as f64 / data.rows() as f64
    }

    #[test]
    fn xor_is_learned() {
        let data = xor_dataset(30);
        let opts = MlpOptions {
            hidden: 8,
            learning_rate: 0.3,
            epochs: 400,
            batch_size: 16,
            seed: 2,
        };
        let (model, curve) = fit_mlp(&data, &opts).unwrap();
        assert!(accuracy(&model, &data) >= 0.95, "acc {}", accuracy(&model, &data));
        assert!(curve.last().unwrap() < &curve[0]);
    }

    #[test]
    fn width_one_handles_linear_data() {
        let data = crate::models::logreg::test_support::blobs(40, 2, 2.0, 5);
        let opts = MlpOptions {
            hidden: 1,
            learning_rate: 0.2,
            epochs: 300,
            batch_size: 16,
            seed: 3,
        };
        let (model, _) = fit_mlp(&data, &opts).unwrap();
        assert!(accuracy(&model, &data) >= 0.95);
    }

    #[test]
    fn gradient_check_on_tiny_network() {
        // 2-4-2 network at seeded init
        let data = xor_dataset(5);
        let hidden = 4;
        let flat = init_params(data.dim(), hidden, data.classes.len(), 7);
        let rows: Vec<usize> = (0..data.rows()).collect();
        let (_, analytic) = loss_and_grad(&flat, &data, &rows, hidden);
        let fd = finite_difference_gradient(
            &flat,
            |p| loss_and_grad(p, &data, &rows, hidden).0,
            1e-6,
        );
        let num: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12);
        assert!(num / den < 1e-3, "rel err {}", num / den);
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let data = xor_dataset(10);
        let (model, _) = fit_mlp(&data, &MlpOptions::default()).unwrap();
        let proba = model.predict_proba(&data.x);
        for row in proba.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}
