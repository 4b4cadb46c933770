//! Implementations of the five subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use ndarray::Array2;

use embercall_core::annotation::{
    build_nocall_dataset, ChannelSelector, EmbeddingRow, LabelPolicy, NO_CALL,
};
use embercall_core::audio::{load_wav, resample, wav_duration_seconds};
use embercall_core::backends::{
    softmax, Embedder, EmbedderOutput, Separator, SubprocessBackend, SyntheticEmbedder,
    SyntheticSeparator, TaxonomyMap,
};
use embercall_core::dataset::{load_dataset, split_bucket};
use embercall_core::features::{build_features, FeatureVector, Variant};
use embercall_core::models::search::{random_search, write_trial_log, ParamRange, SearchSpec};
use embercall_core::models::stack::{fit_stack, BaseSpec};
use embercall_core::models::{
    binary_report, classification_metrics, load_model, save_model, LabeledDataset, Metrics,
    ModelFileMeta, ModelSpec, TrainedModel,
};
use embercall_core::pipeline::{
    execute, load_corpus_manifest, plan, sha256_file, PipelineConfig,
};
use embercall_core::projection::fit_pca2;

use crate::config::ConfigMap;
use crate::{runtime, usage, CliResult};

/// Name of the environment variable selecting a real backend command;
/// unset or empty means the built-in synthetic backends.
pub const BACKEND_CMD_ENV: &str = "EMBERCALL_BACKEND_CMD";

const TRAIN_BUCKET: u8 = 80;

fn backends(seed: u64, work_dir: &Path) -> (Arc<dyn Separator>, Arc<dyn Embedder>) {
    match std::env::var(BACKEND_CMD_ENV) {
        Ok(cmd) if !cmd.trim().is_empty() => {
            let backend = Arc::new(SubprocessBackend::new(cmd, work_dir.join("backend")));
            (backend.clone(), backend)
        }
        _ => (
            Arc::new(SyntheticSeparator::new()),
            Arc::new(SyntheticEmbedder::new(seed)),
        ),
    }
}

fn rows_of(x: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let views: Vec<_> = indices.iter().map(|&i| x.row(i)).collect();
    ndarray::stack(ndarray::Axis(0), &views).expect("consistent row widths")
}

// ---------------------------------------------------------------- build

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Corpus manifest CSV: track_stem,wav_path,primary_label,secondary_labels.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Taxonomy CSV; defaults to taxonomy.csv next to the corpus manifest.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Output root; the dataset lands in <out>/<version>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset version tag.
    #[arg(long)]
    version: Option<String>,
    /// Maximum concurrently running tasks.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Channel selector: max_energy | max_positive_classifications | original_plus_best.
    #[arg(long)]
    selector: Option<String>,
    /// Label policy: threshold_primary | multilabel_primary_secondary | metadata_filtered.
    #[arg(long)]
    policy: Option<String>,
    /// Probability threshold tau in (0,1).
    #[arg(long)]
    threshold: Option<f64>,
    /// Chunk length threshold in seconds.
    #[arg(long)]
    chunk_threshold: Option<f64>,
    /// Separated sources per track (4 or 8).
    #[arg(long)]
    num_sources: Option<usize>,
    /// Ignore previous run state and re-run every task.
    #[arg(long)]
    no_resume: bool,
}

pub fn cmd_build(args: BuildArgs, cfg: &ConfigMap) -> CliResult<()> {
    let corpus: PathBuf = cfg.require(&args.corpus, "corpus")?;
    let out: PathBuf = cfg.require(&args.out, "out")?;
    let taxonomy: PathBuf = match cfg.resolve_opt(&args.taxonomy, "taxonomy")? {
        Some(p) => p,
        None => corpus
            .parent()
            .unwrap_or(Path::new("."))
            .join("taxonomy.csv"),
    };
    let version = cfg.resolve(&args.version, "version", "v1".to_string())?;
    let workers = cfg.resolve(&args.workers, "workers", 4usize)?;
    let seed = cfg.resolve(&args.seed, "seed", 0u64)?;
    let selector = cfg.resolve(&args.selector, "selector", "original_plus_best".to_string())?;
    let policy = cfg.resolve(&args.policy, "policy", "threshold_primary".to_string())?;
    let threshold = cfg.resolve(&args.threshold, "threshold", 0.5f64)?;
    let chunk_threshold = cfg.resolve(&args.chunk_threshold, "chunk_threshold", 180.0f64)?;
    let num_sources = cfg.resolve(&args.num_sources, "num_sources", 4usize)?;

    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(usage(format!(
            "--threshold must be in (0,1), got {threshold}"
        )));
    }
    if workers < 1 {
        return Err(usage("--workers must be >= 1"));
    }
    let selector = ChannelSelector::parse(&selector)?;
    let policy = LabelPolicy::parse(&policy, threshold)?;
    if !taxonomy.is_file() {
        return Err(usage(format!(
            "taxonomy file {} not found",
            taxonomy.display()
        )));
    }

    let tracks = load_corpus_manifest(&corpus)?;
    let work_dir = out.join("work");
    let dataset_dir = out.join(&version);
    let config = PipelineConfig {
        work_dir: work_dir.clone(),
        dataset_dir: dataset_dir.clone(),
        version,
        chunk_threshold_s: chunk_threshold,
        pad_multiple_s: 3,
        noise_amplitude: 1e-4,
        num_sources,
        selector,
        policy,
        threshold,
        seed,
    };
    let (separator, embedder) = backends(seed, &work_dir);
    let graph = plan(&tracks, &taxonomy, &config, separator, embedder)?;
    let report = execute(&graph, workers, !args.no_resume, &work_dir.join("state.json"))?;

    let total = report.executed.len() + report.skipped.len() + report.failed.len();
    println!("tasks: {total}");
    println!("executed: {}", report.executed.len());
    if total > 0 && report.skipped.len() == total {
        println!("skipped: all");
    } else {
        println!("skipped: {}", report.skipped.len());
    }
    println!("failed: {}", report.failed.len());
    if !report.failed.is_empty() {
        for (id, msg) in &report.failed {
            eprintln!("failed task {id}: {msg}");
        }
        return Err(runtime(format!(
            "{} task(s) failed",
            report.failed.len()
        )));
    }
    let manifest =
        embercall_core::dataset::DatasetManifest::load(&dataset_dir.join("manifest.json"))?;
    println!("dataset: {} ({} rows)", dataset_dir.display(), manifest.total_rows());
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Consolidated dataset directory (data.ndjson + manifest.json).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Feature variant: M1 | M2 | M3 | M4 | concat5s | logit_softmax.
    #[arg(long)]
    variant: Option<String>,
    /// Model family: logreg | cnb | mlp | ovr | stack.
    #[arg(long)]
    model: Option<String>,
    /// Random-search budget; omit to train with the given hyperparameters.
    #[arg(long)]
    search: Option<usize>,
    /// Output model file; metrics land in <out>.metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// L2 strength for logreg/ovr (and the logreg base of stack).
    #[arg(long)]
    lambda: Option<f64>,
    /// Complement naive Bayes smoothing.
    #[arg(long)]
    alpha: Option<f64>,
    /// MLP hidden width.
    #[arg(long)]
    hidden: Option<usize>,
    /// MLP learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// MLP epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// MLP minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Cross-validation folds for --search and stack.
    #[arg(long)]
    folds: Option<usize>,
}

/// Concrete hyperparameters after flag/config/default resolution.
struct Hyper {
    lambda: f64,
    alpha: f64,
    hidden: usize,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
}

impl Hyper {
    fn spec(&self, family: &str) -> CliResult<ModelSpec> {
        match family {
            "logreg" => Ok(ModelSpec::Logreg { lambda: self.lambda }),
            "cnb" => Ok(ModelSpec::Cnb { alpha: self.alpha }),
            "mlp" => Ok(ModelSpec::Mlp {
                hidden: self.hidden,
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                batch_size: self.batch_size,
                seed: self.seed,
            }),
            "ovr" => Ok(ModelSpec::Ovr { lambda: self.lambda }),
            other => Err(usage(format!(
                "unknown model family `{other}` (expected logreg|cnb|mlp|ovr|stack)"
            ))),
        }
    }

    /// The single hyperparameter random search explores per family.
    fn search_param(family: &str) -> CliResult<ParamRange> {
        let (name, lo, hi) = match family {
            "logreg" | "ovr" => ("lambda", 1e-5, 10.0),
            "cnb" => ("alpha", 1e-2, 10.0),
            "mlp" => ("learning_rate", 1e-2, 0.3),
            other => {
                return Err(usage(format!(
                    "--search is not supported for model family `{other}`"
                )))
            }
        };
        Ok(ParamRange {
            name: name.to_string(),
            lo,
            hi,
            log: true,
        })
    }

    fn with_params(&self, family: &str, params: &BTreeMap<String, f64>) -> CliResult<ModelSpec> {
        let mut h = Hyper {
            lambda: self.lambda,
            alpha: self.alpha,
            hidden: self.hidden,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        };
        if let Some(&v) = params.get("lambda") {
            h.lambda = v;
        }
        if let Some(&v) = params.get("alpha") {
            h.alpha = v;
        }
        if let Some(&v) = params.get("learning_rate") {
            h.learning_rate = v;
        }
        h.spec(family)
    }
}

/// Deterministic 80/20 split on the parent track stem hash, so no
/// track's windows straddle the boundary.
fn split_rows(rows: &[EmbeddingRow]) -> (Vec<EmbeddingRow>, Vec<EmbeddingRow>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for row in rows {
        if split_bucket(&row.track_stem) < TRAIN_BUCKET {
            train.push(row.clone());
        } else {
            val.push(row.clone());
        }
    }
    (train, val)
}

fn primary_labels(features: &[FeatureVector]) -> Vec<String> {
    features.iter().map(|f| f.labels[0].clone()).collect()
}

fn class_union(groups: &[&[FeatureVector]]) -> Vec<String> {
    let mut classes: Vec<String> = groups
        .iter()
        .flat_map(|g| g.iter())
        .flat_map(|f| f.labels.iter().cloned())
        .collect();
    classes.sort();
    classes.dedup();
    classes
}

fn evaluate(model: &TrainedModel, data: &LabeledDataset, truth: &[String]) -> CliResult<Metrics> {
    let pred = model.predict(&data.x);
    Ok(classification_metrics(truth, &pred)?)
}

pub fn cmd_train(args: TrainArgs, cfg: &ConfigMap) -> CliResult<()> {
    let dataset_dir: PathBuf = cfg.require(&args.dataset, "dataset")?;
    let out: PathBuf = cfg.require(&args.out, "out")?;
    let variant_name = cfg.resolve(&args.variant, "variant", "M1".to_string())?;
    let family = cfg.resolve(&args.model, "model", "logreg".to_string())?;
    let search = cfg.resolve_opt(&args.search, "search")?;
    let folds = cfg.resolve(&args.folds, "folds", 3usize)?;
    let hyper = Hyper {
        lambda: cfg.resolve(&args.lambda, "lambda", 1e-3)?,
        alpha: cfg.resolve(&args.alpha, "alpha", 1.0)?,
        hidden: cfg.resolve(&args.hidden, "hidden", 16usize)?,
        learning_rate: cfg.resolve(&args.learning_rate, "learning_rate", 0.05)?,
        epochs: cfg.resolve(&args.epochs, "epochs", 200usize)?,
        batch_size: cfg.resolve(&args.batch_size, "batch_size", 32usize)?,
        seed: cfg.resolve(&args.seed, "seed", 0u64)?,
    };

    let variant = Variant::parse(&variant_name)?;
    if family == "cnb" && variant != Variant::LogitSoftmax {
        return Err(usage(
            "complement NB requires nonnegative features; use --variant logit_softmax",
        ));
    }
    if !matches!(family.as_str(), "logreg" | "cnb" | "mlp" | "ovr" | "stack") {
        return Err(usage(format!(
            "unknown model family `{family}` (expected logreg|cnb|mlp|ovr|stack)"
        )));
    }

    let (rows, _manifest) = load_dataset(&dataset_dir)?;
    let (train_rows, val_rows) = split_rows(&rows);
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(runtime(format!(
            "track-hash split left {} train / {} validation rows; the corpus has too few tracks",
            train_rows.len(),
            val_rows.len()
        )));
    }
    let (train_feats, train_stats) = build_features(&train_rows, variant)?;
    let (val_feats, _) = build_features(&val_rows, variant)?;
    if train_feats.is_empty() || val_feats.is_empty() {
        return Err(runtime("a split side produced no feature rows"));
    }
    let classes = class_union(&[&train_feats, &val_feats]);
    let train_data = LabeledDataset::from_features(&train_feats, Some(classes.clone()))?;
    let val_data = LabeledDataset::from_features(&val_feats, Some(classes))?;
    println!(
        "train rows: {} (skipped {}), validation rows: {}",
        train_data.rows(),
        train_stats.skipped_missing_context,
        val_data.rows()
    );

    let mut best_params: Option<BTreeMap<String, f64>> = None;
    let model = if family == "stack" {
        if search.is_some() {
            return Err(usage("--search is not supported for model family `stack`"));
        }
        let bases: Vec<BaseSpec> = vec![
            BaseSpec::from(hyper.spec("logreg")?),
            BaseSpec::from(hyper.spec("mlp")?),
        ];
        let (stack, report) = fit_stack(&bases, &train_data, folds.max(2), hyper.seed)?;
        for warning in &report.merge_warnings {
            eprintln!("warning: {warning}");
        }
        TrainedModel::Stack(stack)
    } else {
        let spec = if let Some(budget) = search {
            let range = Hyper::search_param(&family)?;
            let search_spec = SearchSpec {
                params: vec![range],
                budget,
                seed: hyper.seed,
                folds,
            };
            let train_truth = primary_labels(&train_feats);
            let result = random_search(&search_spec, train_data.rows(), |params, tr, va| {
                let spec = Hyper::with_params(&hyper, &family, params)
                    .map_err(|e| embercall_core::Error::Config(e.to_string()))?;
                let model = spec.fit(&train_data.subset(tr))?;
                let x = rows_of(&train_data.x, va);
                let pred = model.predict(&x);
                let truth: Vec<String> = va.iter().map(|&i| train_truth[i].clone()).collect();
                Ok(classification_metrics(&truth, &pred)?.macro_precision)
            })?;
            let shown: Vec<String> = result
                .best_params
                .iter()
                .map(|(k, v)| format!("{k}={v:.6}"))
                .collect();
            println!(
                "best params: {} (cv macro-precision {:.4})",
                shown.join(" "),
                result.best_score
            );
            let log_path = PathBuf::from(format!("{}.trials.csv", out.display()));
            write_trial_log(&log_path, &search_spec, &result.trials)?;
            let spec = hyper.with_params(&family, &result.best_params)?;
            best_params = Some(result.best_params);
            spec
        } else {
            hyper.spec(&family)?
        };
        spec.fit(&train_data)?
    };

    let val_truth = primary_labels(&val_feats);
    let metrics = evaluate(&model, &val_data, &val_truth)?;
    println!("accuracy: {:.4}", metrics.accuracy);
    println!("macro-precision: {:.4}", metrics.macro_precision);

    let manifest_sha = sha256_file(&dataset_dir.join("data.ndjson"))?;
    let mut attrs = BTreeMap::new();
    attrs.insert("variant".to_string(), variant.name().to_string());
    attrs.insert("family".to_string(), model.family().to_string());
    save_model(
        &out,
        &model,
        &ModelFileMeta {
            manifest_sha256: Some(manifest_sha),
            attrs,
        },
    )?;

    let metrics_json = serde_json::json!({
        "family": model.family(),
        "variant": variant.name(),
        "accuracy": metrics.accuracy,
        "macro_precision": metrics.macro_precision,
        "train_rows": train_data.rows(),
        "validation_rows": val_data.rows(),
        "best_params": best_params,
    });
    let metrics_path = PathBuf::from(format!("{}.metrics.json", out.display()));
    std::fs::write(
        &metrics_path,
        serde_json::to_vec_pretty(&metrics_json).expect("metrics encode"),
    )
    .map_err(|e| runtime(format!("write {}: {e}", metrics_path.display())))?;
    println!("model written to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------- infer

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Soundscape WAV, at least 5 seconds long.
    #[arg(long)]
    soundscape: Option<PathBuf>,
    /// Taxonomy CSV defining the species columns.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Output submission CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// One feature row per whole 5 s interval of the soundscape. Tokens are
/// 3 s windows at a 1 s hop; interval k uses the token starting at 5k.
/// M2/M4 take the next interval's token, reusing the current one for
/// the final interval so every interval yields a row.
pub fn interval_features(
    variant: Variant,
    outputs: &[EmbedderOutput],
    intervals: usize,
) -> CliResult<Vec<Vec<f64>>> {
    let tokens: Vec<Vec<f64>> = outputs
        .iter()
        .map(|o| o.embedding.iter().map(|&v| v as f64).collect())
        .collect();
    if tokens.is_empty() {
        return Err(runtime("no embedding tokens for soundscape"));
    }
    let dim = tokens[0].len();
    let mut mean = vec![0.0f64; dim];
    for t in &tokens {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= tokens.len() as f64;
    }

    let mut features = Vec::with_capacity(intervals);
    for k in 0..intervals {
        let i = 5 * k;
        let token = tokens
            .get(i)
            .ok_or_else(|| runtime(format!("missing token for interval {k}")))?;
        let row = match variant {
            Variant::M1 => token.clone(),
            Variant::M2 | Variant::M4 => {
                let next = tokens.get(i + 5).unwrap_or(token);
                let mut row = token.clone();
                row.extend_from_slice(next);
                if variant == Variant::M4 {
                    row.extend_from_slice(&mean);
                }
                row
            }
            Variant::M3 => {
                let mut row = token.clone();
                row.extend_from_slice(&mean);
                row
            }
            Variant::Concat5s => {
                let third = tokens
                    .get(i + 2)
                    .ok_or_else(|| runtime(format!("missing token for interval {k}")))?;
                let mut row = token.clone();
                row.extend_from_slice(third);
                row
            }
            Variant::LogitSoftmax => softmax(&outputs[i].logits),
        };
        features.push(row);
    }
    Ok(features)
}

pub fn cmd_infer(args: InferArgs, cfg: &ConfigMap) -> CliResult<()> {
    let model_path: PathBuf = cfg.require(&args.model, "model")?;
    let soundscape: PathBuf = cfg.require(&args.soundscape, "soundscape")?;
    let taxonomy_path: PathBuf = cfg.require(&args.taxonomy, "taxonomy")?;
    let out: PathBuf = cfg.require(&args.out, "out")?;
    let seed = cfg.resolve(&args.seed, "seed", 0u64)?;

    let (model, meta) = load_model(&model_path)?;
    let variant = match meta.attrs.get("variant") {
        Some(name) => Variant::parse(name)?,
        None => {
            return Err(usage(format!(
                "model file {} does not record its feature variant",
                model_path.display()
            )))
        }
    };
    let taxonomy = TaxonomyMap::load(&taxonomy_path)?;
    let mut species: Vec<String> = taxonomy.species.clone();
    species.sort();
    for class in model.classes() {
        if class != NO_CALL && !species.contains(class) {
            return Err(runtime(format!(
                "model species `{class}` is not in the taxonomy"
            )));
        }
    }

    let duration = wav_duration_seconds(&soundscape)?;
    if duration < 5.0 {
        return Err(usage(format!(
            "soundscape is {duration:.2} s; need at least 5 s"
        )));
    }
    let intervals = (duration / 5.0).floor() as usize;

    let stem = soundscape
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("soundscape")
        .to_string();
    let parent = out.parent().unwrap_or(Path::new("."));
    if !parent.as_os_str().is_empty() {
        std::fs::create_dir_all(parent)
            .map_err(|e| runtime(format!("create {}: {e}", parent.display())))?;
    }
    let (_, embedder) = backends(seed, parent);
    let clip = load_wav(&soundscape, stem.clone())?;
    let clip = resample(&clip, embedder.declared_rate())?;
    let outputs = embedder.embed_windows(&clip)?;
    let feats = interval_features(variant, &outputs, intervals)?;

    let n = feats.len();
    let dim = feats[0].len();
    let mut x = Array2::<f64>::zeros((n, dim));
    for (i, row) in feats.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let proba = model.predict_proba(&x);
    let class_index: BTreeMap<&str, usize> = model
        .classes()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut csv = String::from("row_id");
    for s in &species {
        csv.push(',');
        csv.push_str(s);
    }
    csv.push('\n');
    for k in 0..n {
        csv.push_str(&format!("{stem}_{}", (k + 1) * 5));
        for s in &species {
            let p = class_index
                .get(s.as_str())
                .map(|&c| proba[[k, c]])
                .unwrap_or(0.0);
            csv.push_str(&format!(",{p:.6}"));
        }
        csv.push('\n');
    }
    std::fs::write(&out, csv).map_err(|e| runtime(format!("write {}: {e}", out.display())))?;
    println!(
        "wrote {} rows x {} species columns to {}",
        n,
        species.len(),
        out.display()
    );
    Ok(())
}

// -------------------------------------------------------------- project

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Consolidated dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated species codes; keep rows labeled with any of them.
    #[arg(long)]
    filter: Option<String>,
    /// Output CSV: track_name,start_time,label,x,y.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cmd_project(args: ProjectArgs, cfg: &ConfigMap) -> CliResult<()> {
    let dataset_dir: PathBuf = cfg.require(&args.dataset, "dataset")?;
    let out: PathBuf = cfg.require(&args.out, "out")?;
    let filter = cfg.resolve_opt(&args.filter, "filter")?;

    let (rows, _) = load_dataset(&dataset_dir)?;
    let keep: Vec<&EmbeddingRow> = match &filter {
        None => rows.iter().collect(),
        Some(list) => {
            let wanted: Vec<&str> = list.split(',').map(|s| s.trim()).collect();
            rows.iter()
                .filter(|r| r.labels().iter().any(|l| wanted.contains(&l.as_str())))
                .collect()
        }
    };
    if keep.len() < 3 {
        return Err(runtime(format!(
            "projection needs at least 3 rows, got {} after filtering",
            keep.len()
        )));
    }
    let dim = keep[0].embedding.len();
    let mut x = Array2::<f64>::zeros((keep.len(), dim));
    for (i, row) in keep.iter().enumerate() {
        for (j, &v) in row.embedding.iter().enumerate() {
            x[[i, j]] = v as f64;
        }
    }
    let projection = fit_pca2(&x)?;
    let coords = projection.transform(&x);

    let mut csv = String::from("track_name,start_time,label,x,y\n");
    for (i, row) in keep.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            row.track_name,
            row.start_time,
            row.species,
            coords[[i, 0]],
            coords[[i, 1]]
        ));
    }
    std::fs::write(&out, csv).map_err(|e| runtime(format!("write {}: {e}", out.display())))?;
    println!("wrote {} points to {}", keep.len(), out.display());
    Ok(())
}

// -------------------------------------------------------- nocall-report

#[derive(Debug, Args)]
pub struct NocallReportArgs {
    /// Consolidated dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Call threshold on the max softmax probability.
    #[arg(long)]
    threshold: Option<f64>,
    /// Restrict to the N most frequent species before labeling.
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

const CALL: &str = "call";

pub fn cmd_nocall_report(args: NocallReportArgs, cfg: &ConfigMap) -> CliResult<()> {
    let dataset_dir: PathBuf = cfg.require(&args.dataset, "dataset")?;
    let threshold = cfg.resolve(&args.threshold, "threshold", 0.5f64)?;
    let top_n = cfg.resolve_opt(&args.top_n, "top_n")?;

    let (rows, _) = load_dataset(&dataset_dir)?;
    let binary = build_nocall_dataset(&rows, threshold, top_n);
    println!("balance: {}", binary.balance_report());
    if binary.labels.is_empty() {
        return Err(runtime("no rows selected for the call/no-call dataset"));
    }
    if binary.positive_fraction == 0.0 || binary.positive_fraction == 1.0 {
        return Err(runtime(format!(
            "call/no-call dataset has a single class ({}); adjust --threshold",
            binary.balance_report()
        )));
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    for &(i, is_call) in &binary.labels {
        let label = if is_call { CALL } else { NO_CALL };
        let feature = FeatureVector::new(
            rows[i].embedding.iter().map(|&v| v as f64).collect(),
            Variant::M1,
            vec![label.to_string()],
        );
        if split_bucket(&rows[i].track_stem) < TRAIN_BUCKET {
            train.push(feature);
        } else {
            val.push(feature);
        }
    }
    if train.is_empty() || val.is_empty() {
        return Err(runtime(
            "track-hash split left a side empty; the corpus has too few tracks",
        ));
    }
    let classes = vec![CALL.to_string(), NO_CALL.to_string()];
    let train_data = LabeledDataset::from_features(&train, Some(classes.clone()))?;
    let val_data = LabeledDataset::from_features(&val, Some(classes))?;
    let model = ModelSpec::Logreg { lambda: 1e-3 }.fit(&train_data)?;
    let pred = model.predict(&val_data.x);
    let truth = primary_labels(&val);
    let metrics = classification_metrics(&truth, &pred)?;
    println!("{}", binary_report(&pred, NO_CALL)?);
    println!("held-out accuracy: {:.4}", metrics.accuracy);
    Ok(())
}
