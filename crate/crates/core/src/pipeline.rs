//! Checkpointed DAG executor for the chunk → separate → embed →
//! annotate → shard → consolidate pipeline.
//!
//! Tasks declare file inputs and outputs; edges are derived from who
//! produces what. Completion is existence plus a recorded content hash,
//! so a deleted or corrupted artifact re-runs exactly its branch on
//! resume. The scheduler is single-threaded; actions run on up to W
//! worker threads and share nothing beyond their declared files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::annotation::{
    assign_labels, rows_from_outputs, select_channel, ChannelSelector, LabelPolicy, TrackMetadata,
};
use crate::audio::{
    chunk_noise_seed, energy, load_wav, pad_to_multiple, plan_chunks, recursive_chunk, resample,
    slide_windows, temp_sibling, wav_frames, write_wav,
};
use crate::backends::{
    Embedder, EmbedderOutput, SeparationResult, Separator, TaxonomyMap, HOP_SECONDS,
    WINDOW_SECONDS,
};
use crate::dataset::{consolidate, read_rows, write_shard, ConfigSnapshot};
use crate::error::{Error, Result};

type Action = Arc<dyn Fn() -> Result<()> + Send + Sync>;

pub struct Task {
    pub id: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub action: Action,
}

pub struct TaskGraph {
    pub tasks: Vec<Task>,
}

impl TaskGraph {
    /// Direct dependency indices per task, derived from file targets.
    /// Errors on duplicate outputs or cycles.
    pub fn dependencies(&self) -> Result<Vec<Vec<usize>>> {
        let mut producer: BTreeMap<&Path, usize> = BTreeMap::new();
        for (i, task) in self.tasks.iter().enumerate() {
            for out in &task.outputs {
                if producer.insert(out.as_path(), i).is_some() {
                    return Err(Error::Pipeline(format!(
                        "output {} produced by more than one task",
                        out.display()
                    )));
                }
            }
        }
        let deps: Vec<Vec<usize>> = self
            .tasks
            .iter()
            .map(|task| {
                let mut d: Vec<usize> = task
                    .inputs
                    .iter()
                    .filter_map(|inp| producer.get(inp.as_path()).cloned())
                    .collect();
                d.sort();
                d.dedup();
                d
            })
            .collect();

        // Kahn's algorithm; anything left over sits on a cycle.
        let mut remaining: Vec<usize> = deps.iter().map(|d| d.len()).collect();
        let mut queue: Vec<usize> = (0..self.tasks.len())
            .filter(|&i| remaining[i] == 0)
            .collect();
        let mut seen = 0;
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); self.tasks.len()];
        for (i, d) in deps.iter().enumerate() {
            for &p in d {
                dependents[p].push(i);
            }
        }
        while let Some(i) = queue.pop() {
            seen += 1;
            for &j in &dependents[i] {
                remaining[j] -= 1;
                if remaining[j] == 0 {
                    queue.push(j);
                }
            }
        }
        if seen != self.tasks.len() {
            let cyclic: Vec<String> = (0..self.tasks.len())
                .filter(|&i| remaining[i] > 0)
                .map(|i| self.tasks[i].id.clone())
                .collect();
            return Err(Error::TaskCycle(cyclic));
        }
        Ok(deps)
    }
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
    pub wall_seconds: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn load_state(path: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok())
        .unwrap_or_default()
}

fn save_state(path: &Path, state: &BTreeMap<String, String>) -> Result<()> {
    let text = serde_json::to_string_pretty(state).map_err(|e| Error::Pipeline(e.to_string()))?;
    let tmp = temp_sibling(path);
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pending,
    Running,
    Done,
    Failed,
}

/// Run the graph on up to `workers` threads. With `resume`, a task is
/// skipped when all its outputs exist with hashes matching `state_path`
/// AND none of its dependencies ran in this invocation.
pub fn execute(
    graph: &TaskGraph,
    workers: usize,
    resume: bool,
    state_path: &Path,
) -> Result<RunReport> {
    if workers < 1 {
        return Err(Error::Pipeline("workers must be >= 1".into()));
    }
    let deps = graph.dependencies()?;
    let n = graph.tasks.len();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, d) in deps.iter().enumerate() {
        for &p in d {
            dependents[p].push(i);
        }
    }

    let mut state = load_state(state_path);
    let mut status = vec![Status::Pending; n];
    let mut executed_flag = vec![false; n];
    let mut unmet: Vec<usize> = deps.iter().map(|d| d.len()).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| unmet[i] == 0).collect();
    let mut report = RunReport::default();
    let mut in_flight = 0usize;
    let (tx, rx) = mpsc::channel::<(usize, Result<()>, f64)>();

    let can_skip = |task: &Task, state: &BTreeMap<String, String>, dep_ran: bool| -> bool {
        if !resume || dep_ran {
            return false;
        }
        task.outputs.iter().all(|out| {
            out.exists()
                && state
                    .get(&out.display().to_string())
                    .map(|recorded| sha256_file(out).map(|h| &h == recorded).unwrap_or(false))
                    .unwrap_or(false)
        })
    };

    let fail_task = |i: usize,
                     message: String,
                     status: &mut Vec<Status>,
                     ready: &mut BTreeSet<usize>,
                     report: &mut RunReport| {
        // propagate failure through every transitive dependent
        let mut stack = vec![(i, message)];
        while let Some((t, msg)) = stack.pop() {
            if status[t] == Status::Failed {
                continue;
            }
            status[t] = Status::Failed;
            ready.remove(&t);
            report.failed.push((graph.tasks[t].id.clone(), msg));
            for &d in &dependents[t] {
                if status[d] == Status::Pending {
                    stack.push((
                        d,
                        format!("dependency failed: {}", graph.tasks[t].id),
                    ));
                }
            }
        }
    };

    let mut finished = 0usize;
    while finished < n {
        // dispatch as many ready tasks as the pool allows
        while in_flight < workers {
            let Some(&i) = ready.iter().next() else { break };
            ready.remove(&i);
            let task = &graph.tasks[i];
            let dep_ran = deps[i].iter().any(|&p| executed_flag[p]);

            if can_skip(task, &state, dep_ran) {
                status[i] = Status::Done;
                finished += 1;
                report.skipped.push(task.id.clone());
                for &d in &dependents[i] {
                    if status[d] == Status::Pending {
                        unmet[d] -= 1;
                        if unmet[d] == 0 {
                            ready.insert(d);
                        }
                    }
                }
                continue;
            }

            // inputs with no producer must already exist on disk
            let missing: Vec<String> = task
                .inputs
                .iter()
                .filter(|p| !p.exists())
                .map(|p| p.display().to_string())
                .collect();
            if !missing.is_empty() {
                fail_task(
                    i,
                    format!("missing inputs: {}", missing.join(", ")),
                    &mut status,
                    &mut ready,
                    &mut report,
                );
                // fail_task may have marked pending dependents too
                finished = status
                    .iter()
                    .filter(|s| **s != Status::Pending && **s != Status::Running)
                    .count();
                continue;
            }

            status[i] = Status::Running;
            in_flight += 1;
            let action = task.action.clone();
            let tx = tx.clone();
            std::thread::spawn(move || {
                let start = Instant::now();
                let result = action();
                let _ = tx.send((i, result, start.elapsed().as_secs_f64()));
            });
        }

        if finished >= n {
            break;
        }
        if in_flight == 0 {
            // nothing running and nothing ready: the rest were failed
            break;
        }

        let (i, result, wall) = rx.recv().expect("worker channel closed");
        in_flight -= 1;
        let task = &graph.tasks[i];
        report.wall_seconds.insert(task.id.clone(), wall);
        match result {
            Ok(()) => {
                status[i] = Status::Done;
                executed_flag[i] = true;
                finished += 1;
                report.executed.push(task.id.clone());
                for out in &task.outputs {
                    state.insert(out.display().to_string(), sha256_file(out)?);
                }
                save_state(state_path, &state)?;
                for &d in &dependents[i] {
                    if status[d] == Status::Pending {
                        unmet[d] -= 1;
                        if unmet[d] == 0 {
                            ready.insert(d);
                        }
                    }
                }
            }
            Err(e) => {
                fail_task(i, e.to_string(), &mut status, &mut ready, &mut report);
                finished = status
                    .iter()
                    .filter(|s| **s != Status::Pending && **s != Status::Running)
                    .count();
            }
        }
    }

    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    /// Final dataset directory (already versioned).
    pub dataset_dir: PathBuf,
    pub version: String,
    pub chunk_threshold_s: f64,
    pub pad_multiple_s: u32,
    pub noise_amplitude: f32,
    pub num_sources: usize,
    pub selector: ChannelSelector,
    pub policy: LabelPolicy,
    /// Probability threshold used by selection and labeling heuristics.
    pub threshold: f64,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            threshold: self.threshold,
            hop_s: HOP_SECONDS,
            window_s: WINDOW_SECONDS,
            chunk_threshold_s: self.chunk_threshold_s,
            pad_multiple_s: self.pad_multiple_s,
            noise_amplitude: self.noise_amplitude,
            num_sources: self.num_sources,
            selector: serde_json::to_string(&self.selector).unwrap_or_default(),
            policy: serde_json::to_string(&self.policy).unwrap_or_default(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusTrack {
    pub stem: String,
    pub wav_path: PathBuf,
    pub metadata: TrackMetadata,
}

/// Parse `track_stem,wav_path,primary_label,secondary_labels` CSV
/// (space-separated secondaries). Duplicate stems are an error.
pub fn load_corpus_manifest(path: &Path) -> Result<Vec<CorpusTrack>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut tracks = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.starts_with("track_stem") {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, ',').collect();
        if fields.len() < 3 {
            return Err(Error::parse(
                path,
                format!(
                    "line {}: expected track_stem,wav_path,primary_label,secondary_labels",
                    lineno + 1
                ),
            ));
        }
        let stem = fields[0].to_string();
        if !seen.insert(stem.clone()) {
            return Err(Error::Pipeline(format!("duplicate track stem `{stem}`")));
        }
        let wav = PathBuf::from(fields[1]);
        let wav_path = if wav.is_absolute() { wav } else { base.join(wav) };
        let secondaries = fields
            .get(3)
            .map(|s| s.split_whitespace().map(|x| x.to_string()).collect())
            .unwrap_or_default();
        tracks.push(CorpusTrack {
            stem,
            wav_path,
            metadata: TrackMetadata {
                primary: fields[2].to_string(),
                secondaries,
            },
        });
    }
    Ok(tracks)
}

fn write_ndjson<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Pipeline(e.to_string()))?;
        out.push(b'\n');
    }
    let tmp = temp_sibling(path);
    std::fs::write(&tmp, out).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_ndjson<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(lineno, line)| {
            serde_json::from_str(line)
                .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))
        })
        .collect()
}

/// Build the full task graph for a corpus. Per track: one chunk task;
/// per chunk: separate, 1 + num_sources embed tasks, annotate, shard;
/// one consolidate over every shard.
pub fn plan(
    tracks: &[CorpusTrack],
    taxonomy_path: &Path,
    config: &PipelineConfig,
    separator: Arc<dyn Separator>,
    embedder: Arc<dyn Embedder>,
) -> Result<TaskGraph> {
    let chunks_dir = config.work_dir.join("chunks");
    let sources_dir = config.work_dir.join("sources");
    let embed_dir = config.work_dir.join("embed");
    let annot_dir = config.work_dir.join("annot");
    let shards_dir = config.work_dir.join("shards");
    for dir in [
        &chunks_dir,
        &sources_dir,
        &embed_dir,
        &annot_dir,
        &shards_dir,
        &config.dataset_dir,
    ] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let metadata: Arc<BTreeMap<String, TrackMetadata>> = Arc::new(
        tracks
            .iter()
            .map(|t| (t.stem.clone(), t.metadata.clone()))
            .collect(),
    );
    let mut seen = BTreeSet::new();
    for t in tracks {
        if !seen.insert(&t.stem) {
            return Err(Error::Pipeline(format!("duplicate track stem `{}`", t.stem)));
        }
    }

    let mut tasks: Vec<Task> = Vec::new();
    let mut shard_paths: Vec<PathBuf> = Vec::new();

    for track in tracks {
        let (frames, rate) = wav_frames(&track.wav_path)?;
        let chunk_plan = plan_chunks(frames, rate, &track.stem, config.chunk_threshold_s)?;
        let chunk_stems: Vec<String> = (0..chunk_plan.parts.len())
            .map(|i| chunk_plan.part_stem(i))
            .collect();
        let chunk_wavs: Vec<PathBuf> = chunk_stems
            .iter()
            .map(|s| chunks_dir.join(format!("{s}.wav")))
            .collect();

        {
            let wav_path = track.wav_path.clone();
            let stem = track.stem.clone();
            let threshold_s = config.chunk_threshold_s;
            let pad_multiple_s = config.pad_multiple_s;
            let noise_amplitude = config.noise_amplitude;
            let outputs = chunk_wavs.clone();
            tasks.push(Task {
                id: format!("chunk:{}", track.stem),
                inputs: vec![track.wav_path.clone()],
                outputs: chunk_wavs.clone(),
                action: Arc::new(move || {
                    let clip = load_wav(&wav_path, stem.clone())?;
                    let plan = recursive_chunk(&clip, threshold_s)?;
                    if plan.parts.len() != outputs.len() {
                        return Err(Error::Pipeline(format!(
                            "{stem}: planned {} chunks but audio yields {}",
                            outputs.len(),
                            plan.parts.len()
                        )));
                    }
                    for (i, out) in outputs.iter().enumerate() {
                        let part = plan.extract(&clip, i)?;
                        let padded = pad_to_multiple(
                            &part,
                            pad_multiple_s,
                            noise_amplitude,
                            chunk_noise_seed(&stem, i),
                        )?;
                        write_wav(&padded, out)?;
                    }
                    Ok(())
                }),
            });
        }

        for (cstem, chunk_wav) in chunk_stems.iter().zip(&chunk_wavs) {
            let source_wavs: Vec<PathBuf> = (0..config.num_sources)
                .map(|k| {
                    sources_dir.join(format!("{cstem}_{}.wav", SeparationResult::source_name(k)))
                })
                .collect();

            {
                let separator = separator.clone();
                let chunk_wav = chunk_wav.clone();
                let cstem = cstem.clone();
                let outputs = source_wavs.clone();
                let num_sources = config.num_sources;
                tasks.push(Task {
                    id: format!("separate:{cstem}"),
                    inputs: vec![chunk_wav.clone()],
                    outputs: source_wavs.clone(),
                    action: Arc::new(move || {
                        let clip = load_wav(&chunk_wav, cstem.clone())?;
                        let clip = resample(&clip, separator.declared_rate())?;
                        let result = separator.separate(&clip, num_sources)?;
                        for (src, out) in result.sources.iter().zip(&outputs) {
                            write_wav(src, out)?;
                        }
                        Ok(())
                    }),
                });
            }

            let mut channels: Vec<(String, PathBuf)> =
                vec![("original".to_string(), chunk_wav.clone())];
            for (k, src) in source_wavs.iter().enumerate() {
                channels.push((SeparationResult::source_name(k), src.clone()));
            }

            let embed_files: Vec<PathBuf> = channels
                .iter()
                .map(|(name, _)| embed_dir.join(format!("{cstem}_{name}.ndjson")))
                .collect();
            for ((name, wav), out) in channels.iter().zip(&embed_files) {
                let embedder = embedder.clone();
                let wav = wav.clone();
                let out = out.clone();
                let stem = format!("{cstem}_{name}");
                tasks.push(Task {
                    id: format!("embed:{cstem}:{name}"),
                    inputs: vec![wav.clone()],
                    outputs: vec![out.clone()],
                    action: Arc::new(move || {
                        let clip = load_wav(&wav, stem.clone())?;
                        let clip = resample(&clip, embedder.declared_rate())?;
                        let windows = embedder.embed_windows(&clip)?;
                        write_ndjson(&out, &windows)
                    }),
                });
            }

            let annot_file = annot_dir.join(format!("{cstem}.ndjson"));
            {
                let embedder = embedder.clone();
                let chunk_wav = chunk_wav.clone();
                let cstem = cstem.clone();
                let taxonomy_path = taxonomy_path.to_path_buf();
                let channels = channels.clone();
                let embed_files = embed_files.clone();
                let out = annot_file.clone();
                let mut inputs = vec![chunk_wav.clone(), taxonomy_path.clone()];
                inputs.extend(embed_files.iter().cloned());
                tasks.push(Task {
                    id: format!("annotate:{cstem}"),
                    inputs,
                    outputs: vec![annot_file.clone()],
                    action: Arc::new(move || {
                        let taxonomy = TaxonomyMap::load(&taxonomy_path)?;
                        let chunk = load_wav(&chunk_wav, cstem.clone())?;
                        let original = resample(&chunk, embedder.declared_rate())?;
                        let window_energy: BTreeMap<u32, f64> =
                            slide_windows(&original, WINDOW_SECONDS, HOP_SECONDS)?
                                .iter()
                                .map(|w| (w.start_time, energy(&w.samples)))
                                .collect();
                        let mut rows = Vec::new();
                        for ((name, _), file) in channels.iter().zip(&embed_files) {
                            let outputs: Vec<EmbedderOutput> = read_ndjson(file)?;
                            rows.extend(rows_from_outputs(
                                &cstem,
                                name,
                                outputs,
                                &window_energy,
                                &taxonomy,
                            )?);
                        }
                        write_ndjson(&out, &rows)
                    }),
                });
            }

            let shard_path = shards_dir.join(format!("{cstem}.ndjson"));
            {
                let annot_file = annot_file.clone();
                let source_wavs = source_wavs.clone();
                let cstem = cstem.clone();
                let selector = config.selector;
                let policy = config.policy;
                let threshold = config.threshold;
                let metadata = metadata.clone();
                let out = shard_path.clone();
                let mut inputs = vec![annot_file.clone()];
                inputs.extend(source_wavs.iter().cloned());
                tasks.push(Task {
                    id: format!("shard:{cstem}"),
                    inputs,
                    outputs: vec![shard_path.clone()],
                    action: Arc::new(move || {
                        let rows = read_rows(&annot_file)?;
                        let mut channel_energy = BTreeMap::new();
                        for (k, wav) in source_wavs.iter().enumerate() {
                            let clip = load_wav(wav, format!("{cstem}_src{k}"))?;
                            channel_energy
                                .insert(SeparationResult::source_name(k), energy(&clip.samples));
                        }
                        let mut selected = select_channel(rows, selector, &channel_energy, threshold)?;
                        for row in &mut selected {
                            let labels = assign_labels(row, &policy, &metadata)?;
                            row.set_labels(&labels);
                        }
                        write_shard(selected, &out)?;
                        Ok(())
                    }),
                });
            }
            shard_paths.push(shard_path);
        }
    }

    {
        let expected = shard_paths.clone();
        let dataset_dir = config.dataset_dir.clone();
        let version = config.version.clone();
        let snapshot = config.snapshot();
        let outputs = vec![
            dataset_dir.join("data.ndjson"),
            dataset_dir.join("manifest.json"),
        ];
        tasks.push(Task {
            id: "consolidate".to_string(),
            inputs: shard_paths.clone(),
            outputs,
            action: Arc::new(move || {
                consolidate(&expected, &dataset_dir, &version, snapshot.clone())?;
                Ok(())
            }),
        });
    }

    Ok(TaskGraph { tasks })
}
