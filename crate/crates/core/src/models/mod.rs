//! Classifier zoo with a uniform fit / predict-probability contract.
//!
//! Every family consumes a [`LabeledDataset`] (design matrix, per-row
//! target distributions, sample weights) and yields a [`TrainedModel`]
//! whose `predict_proba` rows are probabilities. Multinomial families
//! normalize across classes; the one-vs-rest wrapper emits independent
//! per-class sigmoids.

pub mod cnb;
pub mod io;
pub mod logreg;
pub mod metrics;
pub mod mlp;
pub mod optimize;
pub mod ovr;
pub mod search;
pub mod stack;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub use cnb::CnbModel;
pub use io::{load_model, save_model, ModelFileMeta};
pub use logreg::LinearModel;
pub use metrics::{binary_report, classification_metrics, Metrics};
pub use mlp::MlpModel;
pub use ovr::OvrModel;
pub use stack::StackModel;

/// Design matrix plus per-row target distributions and sample weights.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// rows x dim
    pub x: Array2<f64>,
    /// rows x classes; each row sums to 1 (uniform over a multi-label
    /// set).
    pub targets: Array2<f64>,
    pub weights: Array1<f64>,
    pub classes: Vec<String>,
}

impl LabeledDataset {
    /// Assemble from feature vectors. The class list is the sorted union
    /// of all labels unless one is supplied.
    pub fn from_features(
        features: &[FeatureVector],
        classes: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Model("no training features".into()));
        }
        let dim = features[0].values.len();
        if features.iter().any(|f| f.values.len() != dim) {
            return Err(Error::Model("inconsistent feature dimensions".into()));
        }
        let classes = match classes {
            Some(c) => c,
            None => {
                let mut set: Vec<String> = features
                    .iter()
                    .flat_map(|f| f.labels.iter().cloned())
                    .collect();
                set.sort();
                set.dedup();
                set
            }
        };
        let index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let n = features.len();
        let mut x = Array2::zeros((n, dim));
        let mut targets = Array2::zeros((n, classes.len()));
        let mut weights = Array1::zeros(n);
        for (i, f) in features.iter().enumerate() {
            for (j, &v) in f.values.iter().enumerate() {
                x[[i, j]] = v;
            }
            if f.labels.is_empty() {
                return Err(Error::Model(format!("feature row {i} has no labels")));
            }
            let mass = 1.0 / f.labels.len() as f64;
            for label in &f.labels {
                let c = *index
                    .get(label.as_str())
                    .ok_or_else(|| Error::Model(format!("label `{label}` not in class list")))?;
                targets[[i, c]] += mass;
            }
            weights[i] = f.weight;
        }
        Ok(LabeledDataset {
            x,
            targets,
            weights,
            classes,
        })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Argmax class name per row.
    pub fn label_names(&self) -> Vec<String> {
        self.targets
            .rows()
            .into_iter()
            .map(|row| {
                let c = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                self.classes[c].clone()
            })
            .collect()
    }

    /// Row subset, preserving order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let x = ndarray::stack(
            ndarray::Axis(0),
            &indices.iter().map(|&i| self.x.row(i)).collect::<Vec<_>>(),
        )
        .unwrap();
        let targets = ndarray::stack(
            ndarray::Axis(0),
            &indices
                .iter()
                .map(|&i| self.targets.row(i))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let weights = Array1::from(
            indices
                .iter()
                .map(|&i| self.weights[i])
                .collect::<Vec<f64>>(),
        );
        LabeledDataset {
            x,
            targets,
            weights,
            classes: self.classes.clone(),
        }
    }
}

/// Hyperparameters for one model family.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Logreg {
        lambda: f64,
    },
    Cnb {
        alpha: f64,
    },
    Mlp {
        hidden: usize,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        seed: u64,
    },
    Ovr {
        lambda: f64,
    },
}

impl ModelSpec {
    pub fn fit(&self, data: &LabeledDataset) -> Result<TrainedModel> {
        match *self {
            ModelSpec::Logreg { lambda } => {
                logreg::fit_logreg(data, lambda, &logreg::FitOptions::default())
                    .map(|(m, _)| TrainedModel::Logreg(m))
            }
            ModelSpec::Cnb { alpha } => cnb::fit_cnb(data, alpha).map(TrainedModel::Cnb),
            ModelSpec::Mlp {
                hidden,
                learning_rate,
                epochs,
                batch_size,
                seed,
            } => mlp::fit_mlp(
                data,
                &mlp::MlpOptions {
                    hidden,
                    learning_rate,
                    epochs,
                    batch_size,
                    seed,
                },
            )
            .map(|(m, _)| TrainedModel::Mlp(m)),
            ModelSpec::Ovr { lambda } => ovr::fit_ovr(data, lambda).map(TrainedModel::Ovr),
        }
    }
}

/// A fitted classifier of any family.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Logreg(LinearModel),
    Cnb(CnbModel),
    Mlp(MlpModel),
    Ovr(OvrModel),
    Stack(StackModel),
}

impl TrainedModel {
    pub fn classes(&self) -> &[String] {
        match self {
            TrainedModel::Logreg(m) => &m.classes,
            TrainedModel::Cnb(m) => &m.classes,
            TrainedModel::Mlp(m) => &m.classes,
            TrainedModel::Ovr(m) => &m.classes,
            TrainedModel::Stack(m) => &m.classes,
        }
    }

    /// rows x classes probability matrix. Multinomial families
    /// normalize rows; OvR emits independent sigmoids.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            TrainedModel::Logreg(m) => m.predict_proba(x),
            TrainedModel::Cnb(m) => m.predict_proba(x),
            TrainedModel::Mlp(m) => m.predict_proba(x),
            TrainedModel::Ovr(m) => m.predict_proba(x),
            TrainedModel::Stack(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<String> {
        let proba = self.predict_proba(x);
        proba
            .rows()
            .into_iter()
            .map(|row| {
                let c = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                self.classes()[c].clone()
            })
            .collect()
    }

    pub fn family(&self) -> &'static str {
        match self {
            TrainedModel::Logreg(_) => "logreg",
            TrainedModel::Cnb(_) => "cnb",
            TrainedModel::Mlp(_) => "mlp",
            TrainedModel::Ovr(_) => "ovr",
            TrainedModel::Stack(_) => "stack",
        }
    }
}

/// Row-wise softmax of a logit matrix.
pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}
