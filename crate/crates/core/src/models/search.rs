//! Seeded random hyperparameter search with k-fold cross-validation.
//!
//! Each trial draws every parameter uniformly (or log-uniformly) from
//! its range, evaluates the caller's closure on k train/validation
//! splits, and keeps the draw with the best mean objective. The whole
//! procedure is deterministic for a given seed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Draw uniformly in log space (lo and hi must be positive).
    pub log: bool,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SearchSpec {
    pub params: Vec<ParamRange>,
    pub budget: usize,
    pub seed: u64,
    pub folds: usize,
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    /// Mean objective over folds, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_params: BTreeMap<String, f64>,
    pub best_score: f64,
    pub trials: Vec<Trial>,
}

fn validate(spec: &SearchSpec) -> Result<()> {
    if spec.budget < 1 {
        return Err(Error::Model("search budget must be >= 1".into()));
    }
    if spec.folds < 2 {
        return Err(Error::Model("search needs >= 2 folds".into()));
    }
    for p in &spec.params {
        if !(p.lo < p.hi) {
            return Err(Error::Model(format!(
                "parameter `{}` has empty range [{}, {}]",
                p.name, p.lo, p.hi
            )));
        }
        if p.log && p.lo <= 0.0 {
            return Err(Error::Model(format!(
                "parameter `{}` is log-scaled but lo = {} is not positive",
                p.name, p.lo
            )));
        }
    }
    Ok(())
}

fn draw(params: &[ParamRange], rng: &mut ChaCha8Rng) -> BTreeMap<String, f64> {
    params
        .iter()
        .map(|p| {
            let v = if p.log {
                (rng.gen_range(p.lo.ln()..p.hi.ln())).exp()
            } else {
                rng.gen_range(p.lo..p.hi)
            };
            (p.name.clone(), v)
        })
        .collect()
}

/// Seeded, shuffled fold assignment over `rows` indices.
pub fn fold_indices(rows: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); folds];
    for (i, idx) in order.into_iter().enumerate() {
        out[i % folds].push(idx);
    }
    out
}

/// `eval(params, train_idx, val_idx)` returns the objective on the
/// validation fold (higher is better). A trial fails as a whole if any
/// of its folds fails; the search fails only if every trial does.
pub fn random_search<F>(spec: &SearchSpec, rows: usize, mut eval: F) -> Result<SearchResult>
where
    F: FnMut(&BTreeMap<String, f64>, &[usize], &[usize]) -> Result<f64>,
{
    validate(spec)?;
    if rows < spec.folds {
        return Err(Error::Model(format!(
            "{rows} rows cannot fill {} folds",
            spec.folds
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let folds = fold_indices(rows, spec.folds, spec.seed.wrapping_add(1));

    let mut trials = Vec::with_capacity(spec.budget);
    for index in 0..spec.budget {
        let params = draw(&spec.params, &mut rng);
        let mut scores = Vec::with_capacity(spec.folds);
        let mut failure = None;
        for (f, fold) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != f)
                .flat_map(|(_, fold)| fold.iter().cloned())
                .collect();
            match eval(&params, &train_idx, fold) {
                Ok(score) => scores.push(score),
                Err(e) => {
                    failure = Some(format!("fold {f}: {e}"));
                    break;
                }
            }
        }
        let outcome = match failure {
            Some(msg) => Err(msg),
            None => Ok(scores.iter().sum::<f64>() / scores.len() as f64),
        };
        trials.push(Trial {
            index,
            params,
            outcome,
        });
    }

    let best = trials
        .iter()
        .filter_map(|t| t.outcome.as_ref().ok().map(|&s| (t, s)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    match best {
        Some((trial, score)) => Ok(SearchResult {
            best_params: trial.params.clone(),
            best_score: score,
            trials,
        }),
        None => {
            let log: Vec<String> = trials
                .iter()
                .map(|t| format!("trial {}: {}", t.index, t.outcome.as_ref().unwrap_err()))
                .collect();
            Err(Error::Model(format!(
                "all {} search trials failed: {}",
                trials.len(),
                log.join("; ")
            )))
        }
    }
}

/// CSV trial log: one row per trial with its parameters and outcome.
pub fn write_trial_log(path: &Path, spec: &SearchSpec, trials: &[Trial]) -> Result<()> {
    let mut out = Vec::new();
    let names: Vec<&str> = spec.params.iter().map(|p| p.name.as_str()).collect();
    writeln!(out, "trial,{},score,error", names.join(",")).unwrap();
    for t in trials {
        let values: Vec<String> = names
            .iter()
            .map(|n| format!("{}", t.params[&n.to_string()]))
            .collect();
        let (score, error) = match &t.outcome {
            Ok(s) => (format!("{s}"), String::new()),
            Err(e) => (String::new(), e.replace(',', ";")),
        };
        writeln!(out, "{},{},{},{}", t.index, values.join(","), score, error).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
