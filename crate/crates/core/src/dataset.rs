//! Per-chunk annotation shards and their consolidation into a versioned
//! dataset.
//!
//! Rows are NDJSON with a fixed field order, one shard per chunk. All
//! writes are atomic (temp file + rename) so an interrupted run never
//! leaves a partial file at a declared output path. The consolidated
//! dataset is fully ordered, which makes the output bytes independent of
//! shard arrival order and worker count.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotation::EmbeddingRow;
use crate::audio::temp_sibling;
use crate::error::{Error, Result};

/// One per-chunk dataset file.
#[derive(Debug, Clone)]
pub struct Shard {
    pub path: PathBuf,
    pub track_stem: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardEntry {
    pub path: String,
    pub rows: usize,
    pub sha256: String,
}

/// Config snapshot recorded with every dataset version; enough to
/// reproduce the run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub threshold: f64,
    pub hop_s: u32,
    pub window_s: u32,
    pub chunk_threshold_s: f64,
    pub pad_multiple_s: u32,
    pub noise_amplitude: f32,
    pub num_sources: usize,
    pub selector: String,
    pub policy: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub config: ConfigSnapshot,
    pub shards: Vec<ShardEntry>,
}

impl DatasetManifest {
    pub fn total_rows(&self) -> usize {
        self.shards.iter().map(|s| s.rows).sum()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn encode_rows(rows: &[EmbeddingRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)
            .map_err(|e| Error::Dataset(format!("row encode: {e}")))?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_sibling(path);
    let result = (|| -> Result<()> {
        let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// Write one chunk's rows as an NDJSON shard, sorted by
/// (track_type, start_time).
pub fn write_shard(mut rows: Vec<EmbeddingRow>, path: &Path) -> Result<Shard> {
    let stems: BTreeSet<&str> = rows.iter().map(|r| r.track_stem.as_str()).collect();
    if stems.len() > 1 {
        return Err(Error::Dataset(format!(
            "shard must hold exactly one chunk, got stems {stems:?}"
        )));
    }
    let track_stem = stems.iter().next().map(|s| s.to_string()).unwrap_or_default();
    rows.sort_by(|a, b| {
        a.track_type
            .cmp(&b.track_type)
            .then(a.start_time.cmp(&b.start_time))
    });
    let bytes = encode_rows(&rows)?;
    atomic_write(path, &bytes)?;
    Ok(Shard {
        path: path.to_path_buf(),
        track_stem,
        rows: rows.len(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn read_rows(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Merge shards into `data.ndjson` + `manifest.json` under `out_dir`.
///
/// `expected` lists the chunk shard paths the run planned; any that are
/// missing fail consolidation up front, naming the absent chunks.
pub fn consolidate(
    expected: &[PathBuf],
    out_dir: &Path,
    version: &str,
    config: ConfigSnapshot,
) -> Result<DatasetManifest> {
    if expected.is_empty() {
        return Err(Error::Dataset("no shards".into()));
    }
    let missing: Vec<String> = expected
        .iter()
        .filter(|p| !p.exists())
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingShards(missing));
    }

    // input order must not matter: sort shard paths before reading
    let mut paths: Vec<&PathBuf> = expected.iter().collect();
    paths.sort();

    let mut entries = Vec::new();
    let mut rows: Vec<EmbeddingRow> = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let shard_rows = read_rows(path)?;
        entries.push(ShardEntry {
            path: path.display().to_string(),
            rows: shard_rows.len(),
            sha256: sha256_hex(&bytes),
        });
        rows.extend(shard_rows);
    }

    rows.sort_by(|a, b| {
        a.species
            .cmp(&b.species)
            .then(a.track_stem.cmp(&b.track_stem))
            .then(a.track_type.cmp(&b.track_type))
            .then(a.start_time.cmp(&b.start_time))
    });
    let mut seen: BTreeSet<(String, u32)> = BTreeSet::new();
    for row in &rows {
        if !seen.insert((row.track_name.clone(), row.start_time)) {
            return Err(Error::DuplicateRow {
                track_name: row.track_name.clone(),
                start_time: row.start_time,
            });
        }
    }

    let manifest = DatasetManifest {
        version: version.to_string(),
        config,
        shards: entries,
    };
    let data = encode_rows(&rows)?;
    atomic_write(&out_dir.join("data.ndjson"), &data)?;
    let manifest_json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Dataset(format!("manifest encode: {e}")))?;
    atomic_write(&out_dir.join("manifest.json"), &manifest_json)?;
    Ok(manifest)
}

/// Stable 0..100 bucket for deterministic train/validation splits,
/// derived from the parent track stem (chunk suffixes stripped) so that
/// no track straddles the split.
pub fn split_bucket(track_stem: &str) -> u8 {
    let parent = track_stem
        .rsplit_once("_part")
        .map(|(p, _)| p)
        .unwrap_or(track_stem);
    let digest = Sha256::digest(parent.as_bytes());
    (u64::from_be_bytes(digest[..8].try_into().unwrap()) % 100) as u8
}

/// Load a consolidated dataset (rows + manifest).
pub fn load_dataset(dir: &Path) -> Result<(Vec<EmbeddingRow>, DatasetManifest)> {
    let manifest = DatasetManifest::load(&dir.join("manifest.json"))?;
    let rows = read_rows(&dir.join("data.ndjson"))?;
    Ok((rows, manifest))
}

/// Stable-order subset by equality on named columns.
pub fn filter<'a>(
    rows: &'a [EmbeddingRow],
    clauses: &[(String, String)],
) -> Result<Vec<&'a EmbeddingRow>> {
    for (column, _) in clauses {
        match column.as_str() {
            "species" | "track_stem" | "track_type" | "track_name" | "start_time" => {}
            other => return Err(Error::UnknownColumn(other.to_string())),
        }
    }
    Ok(rows
        .iter()
        .filter(|row| {
            clauses.iter().all(|(column, value)| match column.as_str() {
                "species" => row.labels().iter().any(|l| l == value) || row.species == *value,
                "track_stem" => row.track_stem == *value,
                "track_type" => row.track_type == *value,
                "track_name" => row.track_name == *value,
                "start_time" => row.start_time.to_string() == *value,
                _ => unreachable!(),
            })
        })
        .collect())
}
