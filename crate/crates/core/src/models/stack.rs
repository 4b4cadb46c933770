//! Stacked ensemble: base models feed a meta logistic regression over
//! their concatenated probability outputs. The meta model trains on
//! out-of-fold base predictions so it never sees a base model's output
//! on that model's own training rows.
//!
//! Each base may be restricted to a column subset of the design matrix,
//! mirroring ensembles whose members were trained on differently
//! engineered feature sets.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::logreg::{fit_logreg, FitOptions, LinearModel};
use super::{LabeledDataset, ModelSpec, TrainedModel};
use crate::error::{Error, Result};

/// One ensemble member: a model family plus an optional column subset
/// it sees.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BaseSpec {
    pub spec: ModelSpec,
    pub columns: Option<Vec<usize>>,
}

impl From<ModelSpec> for BaseSpec {
    fn from(spec: ModelSpec) -> Self {
        BaseSpec {
            spec,
            columns: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StackModel {
    pub bases: Vec<TrainedModel>,
    pub column_masks: Vec<Option<Vec<usize>>>,
    pub meta: LinearModel,
    pub classes: Vec<String>,
}

fn select_columns(x: &Array2<f64>, columns: &Option<Vec<usize>>) -> Array2<f64> {
    match columns {
        None => x.clone(),
        Some(cols) => {
            let views: Vec<_> = cols.iter().map(|&c| x.column(c).insert_axis(ndarray::Axis(1))).collect();
            let views: Vec<_> = views.iter().map(|v| v.view()).collect();
            ndarray::concatenate(ndarray::Axis(1), &views).unwrap()
        }
    }
}

impl StackModel {
    fn meta_features(&self, x: &Array2<f64>) -> Array2<f64> {
        let blocks: Vec<Array2<f64>> = self
            .bases
            .iter()
            .zip(&self.column_masks)
            .map(|(b, mask)| b.predict_proba(&select_columns(x, mask)))
            .collect();
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        ndarray::concatenate(ndarray::Axis(1), &views).unwrap()
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        self.meta.predict_proba(&self.meta_features(x))
    }
}

pub struct StackReport {
    pub fold_sizes: Vec<usize>,
    pub merge_warnings: Vec<String>,
}

/// Seeded fold assignment; folds whose training complement would miss a
/// class are merged into their neighbor.
fn build_folds(
    data: &LabeledDataset,
    k: usize,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(idx);
    }

    let labels = data.label_names();
    let present_classes: Vec<&String> = data
        .classes
        .iter()
        .filter(|c| labels.iter().any(|l| l == *c))
        .collect();

    let mut merged = true;
    while merged && folds.len() > 1 {
        merged = false;
        for f in 0..folds.len() {
            let complement_has = |class: &str| {
                folds
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != f)
                    .flat_map(|(_, fold)| fold.iter())
                    .any(|&i| labels[i] == class)
            };
            let missing: Vec<String> = present_classes
                .iter()
                .filter(|c| !complement_has(c))
                .map(|c| c.to_string())
                .collect();
            if !missing.is_empty() {
                let target = if f == 0 { 1 } else { f - 1 };
                warnings.push(format!(
                    "fold {f} merged into fold {target}: training complement missing {missing:?}"
                ));
                let moved = folds.remove(f);
                let target = if f == 0 { 0 } else { f - 1 };
                folds[target].extend(moved);
                merged = true;
                break;
            }
        }
    }
    folds
}

pub fn fit_stack(
    base_specs: &[BaseSpec],
    data: &LabeledDataset,
    k: usize,
    seed: u64,
) -> Result<(StackModel, StackReport)> {
    if k < 2 {
        return Err(Error::Model("stacking needs k >= 2 folds".into()));
    }
    if base_specs.is_empty() {
        return Err(Error::Model("stacking needs at least one base model".into()));
    }
    let mut warnings = Vec::new();
    let folds = build_folds(data, k, seed, &mut warnings);
    let num_classes = data.classes.len();
    let meta_dim = base_specs.len() * num_classes;

    let masked_data = |base: &BaseSpec, indices: &[usize]| -> LabeledDataset {
        let subset = data.subset(indices);
        LabeledDataset {
            x: select_columns(&subset.x, &base.columns),
            targets: subset.targets,
            weights: subset.weights,
            classes: subset.classes,
        }
    };

    // out-of-fold meta features
    let mut meta_x = Array2::<f64>::zeros((data.rows(), meta_dim));
    for (f, fold) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != f)
            .flat_map(|(_, fold)| fold.iter().cloned())
            .collect();
        let val_x = ndarray::stack(
            ndarray::Axis(0),
            &fold.iter().map(|&i| data.x.row(i)).collect::<Vec<_>>(),
        )
        .unwrap();
        for (b, base) in base_specs.iter().enumerate() {
            let train = masked_data(base, &train_idx);
            let fitted = base.spec.fit(&train)?;
            let proba = fitted.predict_proba(&select_columns(&val_x, &base.columns));
            for (row_in_fold, &i) in fold.iter().enumerate() {
                for c in 0..num_classes {
                    meta_x[[i, b * num_classes + c]] = proba[[row_in_fold, c]];
                }
            }
        }
    }

    let meta_data = LabeledDataset {
        x: meta_x,
        targets: data.targets.clone(),
        weights: data.weights.clone(),
        classes: data.classes.clone(),
    };
    let (meta, _) = fit_logreg(&meta_data, 1e-4, &FitOptions::default())?;

    // final bases refit on all rows
    let all: Vec<usize> = (0..data.rows()).collect();
    let bases = base_specs
        .iter()
        .map(|base| base.spec.fit(&masked_data(base, &all)))
        .collect::<Result<Vec<_>>>()?;

    Ok((
        StackModel {
            bases,
            column_masks: base_specs.iter().map(|b| b.columns.clone()).collect(),
            meta,
            classes: data.classes.clone(),
        },
        StackReport {
            fold_sizes: folds.iter().map(|f| f.len()).collect(),
            merge_warnings: warnings,
        },
    ))
}
