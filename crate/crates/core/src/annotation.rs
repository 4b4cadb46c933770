//! Semi-supervised annotation: turn backend outputs into labeled
//! embedding rows.
//!
//! Labels never come from a human here. A row's label set is derived
//! from the track-level metadata (primary and secondary species tags)
//! plus the backend's confidence on that window. `no-call` is the
//! reserved fallback whenever nothing clears the bar.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audio::{energy, resample, slide_windows, AudioClip};
use crate::backends::{softmax, Embedder, SeparationResult, TaxonomyMap};
use crate::backends::{HOP_SECONDS, WINDOW_SECONDS};
use crate::error::{Error, Result};

/// Reserved label for windows without a confident bird vocalization.
pub const NO_CALL: &str = "no-call";

/// Number of top predictions stored per row.
pub const TOP_K: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopPrediction {
    pub rank: u32,
    pub index: usize,
    pub label: String,
    pub mapped_species: Option<String>,
    pub probability: f64,
}

/// One 3-second window's annotation record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbeddingRow {
    /// Assigned label set, space-joined ("grecor" or "grecor ratcis1");
    /// empty until labeling runs.
    pub species: String,
    pub track_stem: String,
    /// "original" or "source0".."source3".
    pub track_type: String,
    pub track_name: String,
    pub embedding: Vec<f32>,
    /// Raw logits.
    pub prediction_vec: Vec<f32>,
    pub predictions: Vec<TopPrediction>,
    pub start_time: u32,
    /// Mean squared amplitude of the ORIGINAL track's window.
    pub energy: f64,
}

impl EmbeddingRow {
    pub fn labels(&self) -> Vec<String> {
        self.species
            .split_whitespace()
            .map(|s| s.to_string())
            .collect()
    }

    pub fn set_labels(&mut self, labels: &[String]) {
        self.species = labels.join(" ");
        self.track_name = track_name(&self.species, &self.track_stem, &self.track_type);
    }

    pub fn max_probability(&self) -> f64 {
        softmax(&self.prediction_vec)
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn track_name(species: &str, track_stem: &str, track_type: &str) -> String {
    format!("{species}/{track_stem}_{track_type}.wav")
}

/// How window-level labels are derived from metadata + predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelPolicy {
    /// Primary label if max softmax probability >= tau, else no-call.
    ThresholdPrimary { tau: f64 },
    /// Primary plus all secondary labels, unconditionally.
    MultilabelPrimarySecondary,
    /// Top-5 predicted species with probability >= tau that are also in
    /// the track's primary/secondary metadata; no-call if empty.
    MetadataFiltered { tau: f64 },
}

impl LabelPolicy {
    pub fn parse(kind: &str, tau: f64) -> Result<Self> {
        if kind != "multilabel_primary_secondary" && (tau <= 0.0 || tau >= 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0,1), got {tau}"
            )));
        }
        match kind {
            "threshold_primary" => Ok(LabelPolicy::ThresholdPrimary { tau }),
            "multilabel_primary_secondary" => Ok(LabelPolicy::MultilabelPrimarySecondary),
            "metadata_filtered" => Ok(LabelPolicy::MetadataFiltered { tau }),
            other => Err(Error::Config(format!("unknown label policy `{other}`"))),
        }
    }
}

/// Which channels of a separated track feed the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSelector {
    /// Keep the source with the highest track-mean energy.
    MaxEnergy,
    /// Keep the source with the most windows whose max softmax >= tau.
    MaxPositiveClassifications,
    /// Keep the original channel plus the max-energy source.
    OriginalPlusBest,
}

impl ChannelSelector {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max_energy" => Ok(ChannelSelector::MaxEnergy),
            "max_positive_classifications" => Ok(ChannelSelector::MaxPositiveClassifications),
            "original_plus_best" => Ok(ChannelSelector::OriginalPlusBest),
            other => Err(Error::Config(format!("unknown channel selector `{other}`"))),
        }
    }
}

/// Track-level metadata: the recordist's primary species tag plus any
/// background species.
#[derive(Debug, Clone, Default)]
pub struct TrackMetadata {
    pub primary: String,
    pub secondaries: Vec<String>,
}

fn top_predictions(logits: &[f32], taxonomy: &TaxonomyMap, k: usize) -> Vec<TopPrediction> {
    let probs = softmax(logits);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, index)| TopPrediction {
            rank: rank as u32 + 1,
            index,
            label: taxonomy.backend_label(index),
            mapped_species: taxonomy.species_code(index).map(|s| s.to_string()),
            probability: probs[index],
        })
        .collect()
}

/// Annotate one padded chunk: one row per sliding window for the
/// original channel and every separated source. The energy field always
/// comes from the original chunk's window, whatever the channel.
pub fn annotate_chunk(
    chunk: &AudioClip,
    sources: &SeparationResult,
    embedder: &dyn Embedder,
    taxonomy: &TaxonomyMap,
) -> Result<Vec<EmbeddingRow>> {
    let original = resample(chunk, embedder.declared_rate())?;
    let original_windows = slide_windows(&original, WINDOW_SECONDS, HOP_SECONDS)?;
    let window_energy: BTreeMap<u32, f64> = original_windows
        .iter()
        .map(|w| (w.start_time, energy(&w.samples)))
        .collect();

    let mut channels: Vec<(String, AudioClip)> = vec![("original".to_string(), original)];
    for (i, src) in sources.sources.iter().enumerate() {
        let name = SeparationResult::source_name(i);
        channels.push((name, resample(src, embedder.declared_rate())?));
    }

    let mut rows = Vec::new();
    for (track_type, clip) in &channels {
        let outputs = embedder.embed_windows(clip)?;
        rows.extend(rows_from_outputs(
            &chunk.stem,
            track_type,
            outputs,
            &window_energy,
            taxonomy,
        )?);
    }
    Ok(rows)
}

/// Turn one channel's raw embedder outputs into unlabeled rows. The
/// energy map must come from the ORIGINAL chunk's windows.
pub fn rows_from_outputs(
    chunk_stem: &str,
    track_type: &str,
    outputs: Vec<crate::backends::EmbedderOutput>,
    original_window_energy: &BTreeMap<u32, f64>,
    taxonomy: &TaxonomyMap,
) -> Result<Vec<EmbeddingRow>> {
    let mut rows = Vec::with_capacity(outputs.len());
    for out in outputs {
        let row_energy = *original_window_energy.get(&out.start_time).ok_or_else(|| {
            Error::Annotation(format!(
                "no original window at t={} for {chunk_stem}",
                out.start_time
            ))
        })?;
        let predictions = top_predictions(&out.logits, taxonomy, TOP_K);
        rows.push(EmbeddingRow {
            species: String::new(),
            track_stem: chunk_stem.to_string(),
            track_type: track_type.to_string(),
            track_name: track_name("", chunk_stem, track_type),
            embedding: out.embedding,
            prediction_vec: out.logits,
            predictions,
            start_time: out.start_time,
            energy: row_energy,
        });
    }
    Ok(rows)
}

/// Filter a chunk's rows down to the selected channel(s).
///
/// `channel_track_energy` maps track_type to that channel's mean energy
/// over the whole track (computed from the channel audio, not the rows:
/// row energy is always the original's).
pub fn select_channel(
    rows: Vec<EmbeddingRow>,
    selector: ChannelSelector,
    channel_track_energy: &BTreeMap<String, f64>,
    tau: f64,
) -> Result<Vec<EmbeddingRow>> {
    if rows.is_empty() {
        return Err(Error::Annotation("empty row group".into()));
    }
    let source_names: Vec<String> = {
        let mut names: Vec<String> = rows
            .iter()
            .map(|r| r.track_type.clone())
            .filter(|t| t.starts_with("source"))
            .collect();
        names.sort();
        names.dedup();
        names
    };
    if source_names.is_empty() {
        return Err(Error::Annotation("no source channels in group".into()));
    }

    let best_by_energy = || -> Result<String> {
        let mut best: Option<(&str, f64)> = None;
        for name in &source_names {
            let e = *channel_track_energy.get(name).ok_or_else(|| {
                Error::Annotation(format!("missing track energy for channel {name}"))
            })?;
            // strict > keeps the lowest source index on ties
            if best.map(|(_, b)| e > b).unwrap_or(true) {
                best = Some((name, e));
            }
        }
        Ok(best.unwrap().0.to_string())
    };

    let keep: Vec<String> = match selector {
        ChannelSelector::MaxEnergy => vec![best_by_energy()?],
        ChannelSelector::OriginalPlusBest => vec!["original".to_string(), best_by_energy()?],
        ChannelSelector::MaxPositiveClassifications => {
            let mut best: Option<(&str, usize)> = None;
            for name in &source_names {
                let count = rows
                    .iter()
                    .filter(|r| &r.track_type == name && r.max_probability() >= tau)
                    .count();
                if best.map(|(_, b)| count > b).unwrap_or(true) {
                    best = Some((name, count));
                }
            }
            vec![best.unwrap().0.to_string()]
        }
    };

    Ok(rows
        .into_iter()
        .filter(|r| keep.contains(&r.track_type))
        .collect())
}

/// Derive a row's label set under a policy. Never empty: `no-call` is
/// the unique fallback.
pub fn assign_labels(
    row: &EmbeddingRow,
    policy: &LabelPolicy,
    metadata: &BTreeMap<String, TrackMetadata>,
) -> Result<Vec<String>> {
    let meta = lookup_metadata(metadata, &row.track_stem)
        .ok_or_else(|| Error::UnknownTrack(row.track_stem.clone()))?;
    let labels = match policy {
        LabelPolicy::ThresholdPrimary { tau } => {
            if row.max_probability() >= *tau {
                vec![meta.primary.clone()]
            } else {
                vec![NO_CALL.to_string()]
            }
        }
        LabelPolicy::MultilabelPrimarySecondary => {
            let mut labels = vec![meta.primary.clone()];
            for s in &meta.secondaries {
                if !labels.contains(s) {
                    labels.push(s.clone());
                }
            }
            labels
        }
        LabelPolicy::MetadataFiltered { tau } => {
            let mut plausible = vec![meta.primary.clone()];
            plausible.extend(meta.secondaries.iter().cloned());
            let mut labels: Vec<String> = row
                .predictions
                .iter()
                .filter(|p| p.probability >= *tau)
                .filter_map(|p| p.mapped_species.clone())
                .filter(|s| plausible.contains(s))
                .collect();
            labels.dedup();
            if labels.is_empty() {
                vec![NO_CALL.to_string()]
            } else {
                labels
            }
        }
    };
    Ok(labels)
}

/// Chunk stems look like `{track_stem}_part{NNN}`; metadata is keyed by
/// the parent track stem but chunk-stem keys also resolve directly.
fn lookup_metadata<'a>(
    metadata: &'a BTreeMap<String, TrackMetadata>,
    stem: &str,
) -> Option<&'a TrackMetadata> {
    if let Some(m) = metadata.get(stem) {
        return Some(m);
    }
    let parent = stem.rsplit_once("_part").map(|(p, _)| p)?;
    metadata.get(parent)
}

/// Binary call/no-call view of an annotated row set.
#[derive(Debug)]
pub struct NocallDataset {
    /// (row index into the input, is_call)
    pub labels: Vec<(usize, bool)>,
    pub positive_fraction: f64,
}

impl NocallDataset {
    /// e.g. "49.7% positive / 50.3% negative"
    pub fn balance_report(&self) -> String {
        format!(
            "{:.1}% positive / {:.1}% negative",
            self.positive_fraction * 100.0,
            (1.0 - self.positive_fraction) * 100.0
        )
    }
}

/// Binary labeling: call iff max softmax >= tau. `top_n` restricts rows
/// to the N most frequent (non no-call) species before labeling.
pub fn build_nocall_dataset(
    rows: &[EmbeddingRow],
    tau: f64,
    top_n: Option<usize>,
) -> NocallDataset {
    let selected: Vec<usize> = match top_n {
        None => (0..rows.len()).collect(),
        Some(n) => {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for row in rows {
                for label in row.labels() {
                    if label != NO_CALL {
                        *counts.entry(label).or_default() += 1;
                    }
                }
            }
            let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let keep: Vec<String> = ranked.into_iter().take(n).map(|(s, _)| s).collect();
            (0..rows.len())
                .filter(|&i| {
                    let labels = rows[i].labels();
                    labels.iter().any(|l| keep.contains(l)) || labels == [NO_CALL]
                })
                .collect()
        }
    };
    let labels: Vec<(usize, bool)> = selected
        .into_iter()
        .map(|i| (i, rows[i].max_probability() >= tau))
        .collect();
    let positives = labels.iter().filter(|(_, call)| *call).count();
    let positive_fraction = if labels.is_empty() {
        0.0
    } else {
        positives as f64 / labels.len() as f64
    };
    NocallDataset {
        labels,
        positive_fraction,
    }
}

/// Parse track metadata CSV: `track_stem,primary_label,secondary_labels`
/// with space-separated secondaries.
pub fn load_track_metadata(path: &std::path::Path) -> Result<BTreeMap<String, TrackMetadata>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_track_metadata(&text, path)
}

pub fn parse_track_metadata(
    text: &str,
    origin: &std::path::Path,
) -> Result<BTreeMap<String, TrackMetadata>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.starts_with("track_stem") {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, ',').collect();
        if fields.len() < 2 {
            return Err(Error::parse(
                origin,
                format!("line {}: expected track_stem,primary,secondaries", lineno + 1),
            ));
        }
        let secondaries = fields
            .get(2)
            .map(|s| s.split_whitespace().map(|x| x.to_string()).collect())
            .unwrap_or_default();
        map.insert(
            fields[0].to_string(),
            TrackMetadata {
                primary: fields[1].to_string(),
                secondaries,
            },
        );
    }
    Ok(map)
}
