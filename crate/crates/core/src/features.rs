//! Engineered model inputs built from embedding tokens.
//!
//! Tokens arrive at a 1-second hop while the scoring task wants
//! 5-second intervals, so the 5-second variants here combine the first
//! and third token of each interval. The context variants concatenate
//! the current token with its successor and/or the track-level mean.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::EmbeddingRow;
use crate::backends::softmax;
use crate::error::{Error, Result};

/// Feature layout. Dimensions assume 320-dim tokens and 3337 logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Current token.
    M1,
    /// Current token ++ next token.
    M2,
    /// Current token ++ track mean.
    M3,
    /// Current token ++ next token ++ track mean.
    M4,
    /// First and third token of each 5 s interval, concatenated.
    Concat5s,
    /// Softmax of the prediction logits.
    LogitSoftmax,
}

impl Variant {
    pub fn dim(&self, embed_dim: usize, class_dim: usize) -> usize {
        match self {
            Variant::M1 => embed_dim,
            Variant::M2 | Variant::M3 | Variant::Concat5s => 2 * embed_dim,
            Variant::M4 => 3 * embed_dim,
            Variant::LogitSoftmax => class_dim,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "M1" | "m1" => Ok(Variant::M1),
            "M2" | "m2" => Ok(Variant::M2),
            "M3" | "m3" => Ok(Variant::M3),
            "M4" | "m4" => Ok(Variant::M4),
            "concat5s" => Ok(Variant::Concat5s),
            "logit_softmax" => Ok(Variant::LogitSoftmax),
            other => Err(Error::Config(format!("unknown feature variant `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::M1 => "M1",
            Variant::M2 => "M2",
            Variant::M3 => "M3",
            Variant::M4 => "M4",
            Variant::Concat5s => "concat5s",
            Variant::LogitSoftmax => "logit_softmax",
        }
    }
}

/// One model input: engineered values plus its (possibly multi-) label
/// set and sample weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub variant: Variant,
    pub labels: Vec<String>,
    pub weight: f64,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, variant: Variant, labels: Vec<String>) -> Self {
        // multi-label rows are down-weighted so each row contributes one
        // unit of total label mass
        let weight = if labels.len() > 1 {
            1.0 / labels.len() as f64
        } else {
            1.0
        };
        FeatureVector {
            values,
            variant,
            labels,
            weight,
        }
    }
}

/// Ordered tokens for one (track, channel) plus the track-mean token.
#[derive(Debug, Clone)]
pub struct TrackContext {
    /// Token per start time 0..n at a 1 s hop.
    pub tokens: Vec<Vec<f64>>,
    pub track_embedding: Vec<f64>,
}

impl TrackContext {
    /// Track embedding is the arithmetic mean of the tokens.
    pub fn from_tokens(tokens: Vec<Vec<f64>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Feature("no tokens for track".into()));
        }
        let dim = tokens[0].len();
        let mut mean = vec![0.0; dim];
        for token in &tokens {
            if token.len() != dim {
                return Err(Error::Feature("ragged token dimensions".into()));
            }
            for (m, v) in mean.iter_mut().zip(token) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= tokens.len() as f64;
        }
        Ok(TrackContext {
            tokens,
            track_embedding: mean,
        })
    }
}

fn mean2(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect()
}

fn concat2(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Interval indices computed from interval start times, never from list
/// positions: interval k is covered iff token 5k+2 exists.
fn covered_intervals(num_tokens: usize) -> impl Iterator<Item = usize> {
    let max_k = if num_tokens >= 3 {
        (num_tokens - 3) / 5 + 1
    } else {
        0
    };
    0..max_k
}

/// Mean of the first and third token of each fully covered 5 s interval.
pub fn align_5s(tokens: &[Vec<f64>]) -> Vec<(usize, Vec<f64>)> {
    covered_intervals(tokens.len())
        .map(|k| (k, mean2(&tokens[5 * k], &tokens[5 * k + 2])))
        .collect()
}

/// Concatenation of the first and third token of each covered interval.
pub fn concat_5s(tokens: &[Vec<f64>]) -> Vec<(usize, Vec<f64>)> {
    covered_intervals(tokens.len())
        .map(|k| (k, concat2(&tokens[5 * k], &tokens[5 * k + 2])))
        .collect()
}

/// Interpolated multi-label features: each output is the mean of one
/// token from each of `group_size` distinct classes, labeled with the
/// union of those classes. Classes are cycled evenly in seeded shuffled
/// order so every class appears in roughly `count * group_size /
/// num_classes` draws.
pub fn interpolate_groups(
    tokens_by_class: &BTreeMap<String, Vec<Vec<f64>>>,
    group_size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<FeatureVector>> {
    if !(2..=3).contains(&group_size) {
        return Err(Error::Feature(format!(
            "group_size must be 2 or 3, got {group_size}"
        )));
    }
    let classes: Vec<&String> = tokens_by_class
        .iter()
        .filter(|(_, tokens)| !tokens.is_empty())
        .map(|(class, _)| class)
        .collect();
    if classes.len() < group_size {
        return Err(Error::Feature(format!(
            "need at least {group_size} classes with tokens, have {}",
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let mut features = Vec::with_capacity(count);
    while features.len() < count {
        // refill a shuffled class cycle; a draw never repeats a class
        while order.len() < group_size {
            let mut cycle: Vec<usize> = (0..classes.len()).collect();
            cycle.shuffle(&mut rng);
            order.extend(cycle);
        }
        let mut draw: Vec<usize> = Vec::with_capacity(group_size);
        let mut rest = Vec::new();
        while draw.len() < group_size {
            let idx = order.remove(0);
            if draw.contains(&idx) {
                rest.push(idx);
            } else {
                draw.push(idx);
            }
        }
        order.splice(0..0, rest);

        let mut labels: Vec<String> = draw.iter().map(|&i| classes[i].clone()).collect();
        let dim = tokens_by_class[classes[draw[0]]][0].len();
        let mut values = vec![0.0; dim];
        for &class_idx in &draw {
            let tokens = &tokens_by_class[classes[class_idx]];
            let token = &tokens[rng.gen_range(0..tokens.len())];
            for (v, t) in values.iter_mut().zip(token) {
                *v += t;
            }
        }
        for v in &mut values {
            *v /= group_size as f64;
        }
        labels.sort();
        features.push(FeatureVector::new(values, Variant::M1, labels));
    }
    Ok(features)
}

/// One context feature. `next` is required for M2/M4; `track` for M3/M4.
pub fn build_context(
    variant: Variant,
    token: &[f64],
    next: Option<&[f64]>,
    track: Option<&[f64]>,
    labels: Vec<String>,
) -> Result<FeatureVector> {
    let values = match variant {
        Variant::M1 => token.to_vec(),
        Variant::M2 => {
            let next = next.ok_or_else(|| Error::Feature("M2 requires a next token".into()))?;
            concat2(token, next)
        }
        Variant::M3 => {
            let track =
                track.ok_or_else(|| Error::Feature("M3 requires a track embedding".into()))?;
            concat2(token, track)
        }
        Variant::M4 => {
            let next = next.ok_or_else(|| Error::Feature("M4 requires a next token".into()))?;
            let track =
                track.ok_or_else(|| Error::Feature("M4 requires a track embedding".into()))?;
            concat2(&concat2(token, next), track)
        }
        other => {
            return Err(Error::Feature(format!(
                "build_context does not produce {}",
                other.name()
            )))
        }
    };
    Ok(FeatureVector::new(values, variant, labels))
}

/// Softmax probabilities of the logits, the input contract for
/// complement naive Bayes.
pub fn logit_features(prediction_vec: &[f32], labels: Vec<String>) -> FeatureVector {
    FeatureVector::new(softmax(prediction_vec), Variant::LogitSoftmax, labels)
}

/// Count of rows skipped for missing context (last token of each track
/// under M2/M4).
#[derive(Debug, Default)]
pub struct BuildStats {
    pub emitted: usize,
    pub skipped_missing_context: usize,
}

/// Build labeled features from annotated rows, grouped per
/// (track_stem, track_type) with tokens ordered by start_time.
pub fn build_features(
    rows: &[EmbeddingRow],
    variant: Variant,
) -> Result<(Vec<FeatureVector>, BuildStats)> {
    let mut groups: BTreeMap<(String, String), Vec<&EmbeddingRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.track_stem.clone(), row.track_type.clone()))
            .or_default()
            .push(row);
    }
    let mut features = Vec::new();
    let mut stats = BuildStats::default();
    for rows in groups.values_mut() {
        rows.sort_by_key(|r| r.start_time);
        match variant {
            Variant::LogitSoftmax => {
                for row in rows.iter() {
                    features.push(logit_features(&row.prediction_vec, row.labels()));
                    stats.emitted += 1;
                }
            }
            Variant::Concat5s | Variant::M1 | Variant::M2 | Variant::M3 | Variant::M4 => {
                let tokens: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| r.embedding.iter().map(|&v| v as f64).collect())
                    .collect();
                if variant == Variant::Concat5s {
                    for (k, values) in concat_5s(&tokens) {
                        let mut labels = rows[5 * k].labels();
                        for l in rows[5 * k + 2].labels() {
                            if !labels.contains(&l) {
                                labels.push(l);
                            }
                        }
                        features.push(FeatureVector::new(values, variant, labels));
                        stats.emitted += 1;
                    }
                } else {
                    let context = TrackContext::from_tokens(tokens)?;
                    for (i, row) in rows.iter().enumerate() {
                        let next = context.tokens.get(i + 1).map(|t| t.as_slice());
                        let needs_next = matches!(variant, Variant::M2 | Variant::M4);
                        if needs_next && next.is_none() {
                            stats.skipped_missing_context += 1;
                            continue;
                        }
                        let feature = build_context(
                            variant,
                            &context.tokens[i],
                            next,
                            Some(&context.track_embedding),
                            row.labels(),
                        )?;
                        features.push(feature);
                        stats.emitted += 1;
                    }
                }
            }
        }
    }
    Ok((features, stats))
}

/// Flat binary export: JSON header line `{"rows","dim","variant"}`
/// followed by row-major little-endian f64 values.
pub fn write_feature_matrix(features: &[FeatureVector], path: &std::path::Path) -> Result<()> {
    if features.is_empty() {
        return Err(Error::Feature("no features to write".into()));
    }
    let dim = features[0].values.len();
    if features.iter().any(|f| f.values.len() != dim) {
        return Err(Error::Feature("inconsistent feature dimensions".into()));
    }
    let header = serde_json::json!({
        "rows": features.len(),
        "dim": dim,
        "variant": features[0].variant.name(),
    });
    let mut bytes = serde_json::to_vec(&header).unwrap();
    bytes.push(b'\n');
    for feature in features {
        for v in &feature.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = crate::audio::temp_sibling(path);
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
