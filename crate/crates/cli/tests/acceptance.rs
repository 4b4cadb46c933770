//! Acceptance suite: one test per criterion, each printing a pass line.
//! Run with `cargo test --test acceptance -- --nocapture` to see them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use embercall_core::annotation::{assign_labels, EmbeddingRow, LabelPolicy, TrackMetadata};
use embercall_core::audio::{pad_to_multiple, recursive_chunk, slide_windows, AudioClip};
use embercall_core::backends::{Separator, SyntheticEmbedder, SyntheticSeparator};
use embercall_core::dataset::load_dataset;
use embercall_core::features::{build_features, FeatureVector, Variant};
use embercall_core::models::cnb::fit_cnb;
use embercall_core::models::logreg::{fit_logreg, loss_and_grad, FitOptions};
use embercall_core::models::mlp;
use embercall_core::models::optimize::finite_difference_gradient;
use embercall_core::models::stack::{fit_stack, BaseSpec};
use embercall_core::models::{
    load_model, save_model, LabeledDataset, ModelFileMeta, ModelSpec, TrainedModel,
};
use embercall_core::synth::{soundscape, write_corpus, CorpusConfig, SynthCorpus};

fn pass(n: u32, what: &str) {
    println!("ACCEPTANCE {n:02}: {what} ... pass");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_embercall"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out: Output = cmd.output().expect("spawn embercall");
    assert_eq!(
        out.status.code(),
        Some(0),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn random_clip(rng: &mut ChaCha8Rng, duration_s: f64, rate: u32, stem: &str) -> AudioClip {
    let n = (duration_s * rate as f64).round() as usize;
    let samples: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    AudioClip::new(samples, rate, stem).unwrap()
}

// ------------------------------------------------------------------ 1

#[test]
fn criterion_01_chunk_conservation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..200 {
        let duration = rng.gen_range(1.0..600.0);
        let rate = 100; // property is rate-independent; keep it cheap
        let clip = random_clip(&mut rng, duration, rate, &format!("clip{i}"));
        let plan = recursive_chunk(&clip, 180.0).unwrap();
        let mut concat = Vec::with_capacity(clip.samples.len());
        for p in 0..plan.parts.len() {
            let part = plan.extract(&clip, p).unwrap();
            assert!(
                part.duration_seconds() <= 180.0 + 1e-9,
                "part {p} of clip {i} is {} s",
                part.duration_seconds()
            );
            concat.extend_from_slice(&part.samples);
        }
        assert_eq!(concat, clip.samples, "clip {i} parts do not concatenate");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed:.1} s");
    pass(1, "200 random clips chunk-conserve bit-exactly under 10 s");
}

// ------------------------------------------------------------------ 2

#[test]
fn criterion_02_padding_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for i in 0..100 {
        let duration = rng.gen_range(0.5..30.0);
        let rate = 500;
        let clip = random_clip(&mut rng, duration, rate, &format!("pad{i}"));
        let seed = rng.gen();
        let padded = pad_to_multiple(&clip, 3, 1e-4, seed).unwrap();
        assert_eq!(padded.samples.len() % (3 * rate as usize), 0);
        assert_eq!(&padded.samples[..clip.samples.len()], &clip.samples[..]);
        let again = pad_to_multiple(&clip, 3, 1e-4, seed).unwrap();
        assert_eq!(padded.samples, again.samples, "rerun differs for clip {i}");
    }
    pass(2, "padded durations are 3 s multiples, prefixes and reruns bit-identical");
}

// ------------------------------------------------------------------ 3

#[test]
fn criterion_03_mixture_consistency() {
    let separator = SyntheticSeparator::with_rate(8000);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let duration = *[3.0, 6.0, 9.0].iter().nth(rng.gen_range(0..3)).unwrap();
        let clip = random_clip(&mut rng, duration, 8000, &format!("mix{i}"));
        let num_sources = if i % 2 == 0 { 4 } else { 8 };
        let result = separator.separate(&clip, num_sources).unwrap();
        for (j, &s) in clip.samples.iter().enumerate() {
            let sum: f32 = result.sources.iter().map(|src| src.samples[j]).sum();
            worst = worst.max((sum - s).abs() as f64);
        }
    }
    assert!(worst < 1e-6, "worst mixture error {worst}");
    pass(3, "separator sum-of-sources max abs error < 1e-6 over 100 clips");
}

// ------------------------------------------------------------------ 4

#[test]
fn criterion_04_window_counting() {
    let rate = 10;
    for duration in 3u32..=120 {
        let clip = AudioClip::new(
            vec![0.1; (duration * rate) as usize],
            rate,
            format!("win{duration}"),
        )
        .unwrap();
        let windows = slide_windows(&clip, 3, 1).unwrap();
        let expected = (duration - 3 + 1) as usize;
        assert_eq!(windows.len(), expected, "duration {duration}");
        for (k, w) in windows.iter().enumerate() {
            assert_eq!(w.start_time, k as u32);
        }
    }
    pass(4, "window counts match the closed form for all durations 3-120 s");
}

// ------------------------------------------------------------------ 5

#[test]
fn criterion_05_labeling_shift_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let metadata: BTreeMap<String, TrackMetadata> = [(
        "t".to_string(),
        TrackMetadata {
            primary: "sp001".to_string(),
            secondaries: vec![],
        },
    )]
    .into();
    for i in 0..1000 {
        let logits: Vec<f32> = (0..40).map(|_| rng.gen_range(-8.0f32..8.0)).collect();
        let shift = rng.gen_range(-50.0f32..50.0);
        let shifted: Vec<f32> = logits.iter().map(|&l| l + shift).collect();
        let tau = rng.gen_range(0.05..0.95);
        let policy = LabelPolicy::ThresholdPrimary { tau };
        let row = |pv: Vec<f32>| EmbeddingRow {
            species: String::new(),
            track_stem: "t".to_string(),
            track_type: "original".to_string(),
            track_name: String::new(),
            embedding: vec![0.0; 4],
            prediction_vec: pv,
            predictions: vec![],
            start_time: 0,
            energy: 0.0,
        };
        let a = assign_labels(&row(logits), &policy, &metadata).unwrap();
        let b = assign_labels(&row(shifted), &policy, &metadata).unwrap();
        assert_eq!(a, b, "row {i} changed labels under a constant logit shift");
    }
    pass(5, "constant logit shifts change no label set across 1000 rows");
}

// ------------------------------------------------------------------ 6

fn blobs(n_per_class: usize, dim: usize, separation: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    for class in 0..2 {
        let center = if class == 0 { -separation } else { separation };
        for _ in 0..n_per_class {
            let values: Vec<f64> = (0..dim)
                .map(|_| center + rng.gen_range(-1.0..1.0))
                .collect();
            features.push(FeatureVector::new(
                values,
                Variant::M1,
                vec![format!("class{class}")],
            ));
        }
    }
    LabeledDataset::from_features(&features, None).unwrap()
}

#[test]
fn criterion_06_logreg_gradient_and_separable_fit() {
    let data = blobs(20, 3, 1.5, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let flat_len = data.classes.len() * data.dim() + data.classes.len();
    for _ in 0..10 {
        let point: Vec<f64> = (0..flat_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, analytic) = loss_and_grad(&point, &data, 0.1);
        let fd = finite_difference_gradient(&point, |p| loss_and_grad(p, &data, 0.1).0, 1e-6);
        let num: f64 = analytic
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = fd.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12);
        assert!(num / den < 1e-4, "gradient rel error {}", num / den);
    }

    let sep = blobs(50, 2, 3.0, 7);
    let (model, trace) = fit_logreg(&sep, 1e-4, &FitOptions::default()).unwrap();
    for w in trace.loss_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
    }
    let pred = TrainedModel::Logreg(model).predict(&sep.x);
    let truth: Vec<String> = sep
        .targets
        .rows()
        .into_iter()
        .map(|r| {
            let c = r
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            sep.classes[c].clone()
        })
        .collect();
    let correct = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
    let acc = correct as f64 / truth.len() as f64;
    assert!(acc >= 0.99, "train accuracy {acc}");
    pass(6, "logreg gradient matches FD, loss is monotone, blobs reach >= 99%");
}

// ------------------------------------------------------------------ 7

/// Straightforward transcription of the complement NB formula.
fn cnb_oracle(x: &Array2<f64>, labels: &[usize], classes: usize, alpha: f64) -> Array2<f64> {
    let dim = x.ncols();
    let mut weights = Array2::<f64>::zeros((classes, dim));
    for c in 0..classes {
        let mut counts = vec![0.0f64; dim];
        for (i, row) in x.rows().into_iter().enumerate() {
            if labels[i] != c {
                for (j, &v) in row.iter().enumerate() {
                    counts[j] += v;
                }
            }
        }
        let denom = alpha * dim as f64 + counts.iter().sum::<f64>();
        for j in 0..dim {
            weights[[c, j]] = ((alpha + counts[j]) / denom).ln();
        }
        let norm: f64 = (0..dim).map(|j| weights[[c, j]].powi(2)).sum::<f64>().sqrt();
        for j in 0..dim {
            weights[[c, j]] /= norm;
        }
    }
    weights
}

#[test]
fn criterion_07_cnb_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..50 {
        let classes = rng.gen_range(2..=10usize);
        let dim = rng.gen_range(2..=10usize);
        let rows = rng.gen_range(classes..=classes + 20);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..rows {
            // every class appears at least once
            let c = if i < classes { i } else { rng.gen_range(0..classes) };
            labels.push(c);
            let values: Vec<f64> = (0..dim).map(|_| rng.gen_range(0..8) as f64).collect();
            features.push(FeatureVector::new(
                values,
                Variant::LogitSoftmax,
                vec![format!("c{c:02}")],
            ));
        }
        let classes_list: Vec<String> = (0..classes).map(|c| format!("c{c:02}")).collect();
        let data = LabeledDataset::from_features(&features, Some(classes_list)).unwrap();
        let model = fit_cnb(&data, 1.0).unwrap();
        let oracle = cnb_oracle(&data.x, &labels, classes, 1.0);
        for (a, b) in model.log_weights.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12, "case {case}: {a} vs {b}");
        }
    }
    pass(7, "complement NB matches a brute-force oracle on 50 count matrices");
}

// ------------------------------------------------------------------ 8

#[test]
fn criterion_08_mlp_gradient_and_xor() {
    // 2-4-2 network at seeded init
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut features = Vec::new();
    for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        let label = if (a as i32) ^ (b as i32) == 1 { "one" } else { "zero" };
        for _ in 0..10 {
            features.push(FeatureVector::new(
                vec![a + rng.gen_range(-0.1..0.1), b + rng.gen_range(-0.1..0.1)],
                Variant::M1,
                vec![label.to_string()],
            ));
        }
    }
    let data = LabeledDataset::from_features(&features, None).unwrap();
    let hidden = 4;
    let flat = mlp::init_params(data.dim(), hidden, data.classes.len(), 8);
    let rows: Vec<usize> = (0..data.rows()).collect();
    let (_, analytic) = mlp::loss_and_grad(&flat, &data, &rows, hidden);
    let fd = finite_difference_gradient(
        &flat,
        |p| mlp::loss_and_grad(p, &data, &rows, hidden).0,
        1e-6,
    );
    let num: f64 = analytic
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = fd.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12);
    assert!(num / den < 1e-3, "gradient rel error {}", num / den);

    let spec = ModelSpec::Mlp {
        hidden: 8,
        learning_rate: 0.3,
        epochs: 400,
        batch_size: 16,
        seed: 2,
    };
    let model = spec.fit(&data).unwrap();
    let pred = model.predict(&data.x);
    let truth: Vec<String> = features.iter().map(|f| f.labels[0].clone()).collect();
    let correct = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
    let acc = correct as f64 / truth.len() as f64;
    assert!(acc >= 0.95, "XOR accuracy {acc}");
    pass(8, "MLP gradient check < 1e-3 and XOR >= 95%");
}

// -------------------------------------------------- shared E2E build

struct E2e {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    corpus: SynthCorpus,
    dataset_dir: PathBuf,
    model_path: PathBuf,
    train_stdout: String,
    nocall_stdout: String,
    build_seconds: f64,
}

static E2E: OnceLock<E2e> = OnceLock::new();

fn grab(stdout: &str, prefix: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no `{prefix}` line in:\n{stdout}"))
        .trim()
        .parse()
        .unwrap()
}

fn e2e() -> &'static E2e {
    E2E.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        // 12 call tracks across 4 species + 4 noise-only tracks, all at
        // the full default dimensions (320/3337, 264 species).
        let config = CorpusConfig::default();
        let embedder = SyntheticEmbedder::new(0);
        let corpus = write_corpus(&dir.path().join("corpus"), &config, &embedder).unwrap();

        let out_dir = dir.path().join("out");
        run_ok(bin().args([
            "build",
            "--corpus",
            corpus.manifest_path.to_str().unwrap(),
            "--taxonomy",
            corpus.taxonomy_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--workers",
            "4",
            "--seed",
            "0",
        ]));
        let dataset_dir = out_dir.join("v1");

        let model_path = dir.path().join("model.bin");
        let train_stdout = run_ok(bin().args([
            "train",
            "--dataset",
            dataset_dir.to_str().unwrap(),
            "--variant",
            "M1",
            "--model",
            "logreg",
            "--out",
            model_path.to_str().unwrap(),
        ]));
        let nocall_stdout = run_ok(bin().args([
            "nocall-report",
            "--dataset",
            dataset_dir.to_str().unwrap(),
            "--threshold",
            "0.5",
        ]));
        E2e {
            dir,
            corpus,
            dataset_dir,
            model_path,
            train_stdout,
            nocall_stdout,
            build_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

// ------------------------------------------------------------------ 9

fn build_cmd(corpus: &SynthCorpus, out_dir: &Path, workers: &str) -> Command {
    let mut cmd = bin();
    cmd.args([
        "build",
        "--corpus",
        corpus.manifest_path.to_str().unwrap(),
        "--taxonomy",
        corpus.taxonomy_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--workers",
        workers,
        "--seed",
        "0",
    ]);
    cmd
}

#[test]
fn criterion_09_pipeline_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let config = CorpusConfig {
        tracks_per_species: 1,
        noise_tracks: 1,
        duration_s: 6.0,
        ..CorpusConfig::default()
    };
    let embedder = SyntheticEmbedder::new(0);
    let corpus = write_corpus(&dir.path().join("corpus"), &config, &embedder).unwrap();

    let out_a = dir.path().join("a");
    let first = run_ok(&mut build_cmd(&corpus, &out_a, "4"));
    assert!(grab(&first, "executed:") > 0.0);

    let second = run_ok(&mut build_cmd(&corpus, &out_a, "4"));
    assert!(second.contains("skipped: all"), "rerun:\n{second}");
    assert_eq!(grab(&second, "executed:"), 0.0);

    // Delete one shard: exactly that shard task plus consolidate re-run.
    let shards_dir = out_a.join("work").join("shards");
    let shard = std::fs::read_dir(&shards_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().map(|e| e == "ndjson").unwrap_or(false))
        .expect("a shard file");
    std::fs::remove_file(&shard).unwrap();
    let third = run_ok(&mut build_cmd(&corpus, &out_a, "4"));
    assert_eq!(grab(&third, "executed:"), 2.0, "rerun:\n{third}");

    // Worker counts must not change the bytes.
    let out_w1 = dir.path().join("w1");
    let out_w8 = dir.path().join("w8");
    run_ok(&mut build_cmd(&corpus, &out_w1, "1"));
    run_ok(&mut build_cmd(&corpus, &out_w8, "8"));
    let d1 = std::fs::read(out_w1.join("v1").join("data.ndjson")).unwrap();
    let d8 = std::fs::read(out_w8.join("v1").join("data.ndjson")).unwrap();
    assert_eq!(d1, d8, "W=1 and W=8 datasets differ");
    pass(9, "rerun skips all, one deleted shard re-runs shard+consolidate, W in {1,8} byte-identical");
}

// ----------------------------------------------------------------- 10

#[test]
fn criterion_10_end_to_end_synthetic_experiment() {
    let e2e = e2e();
    let macro_precision = grab(&e2e.train_stdout, "macro-precision:");
    assert!(
        macro_precision >= 0.9,
        "held-out macro-precision {macro_precision}\n{}",
        e2e.train_stdout
    );
    let nocall_acc = grab(&e2e.nocall_stdout, "held-out accuracy:");
    assert!(
        nocall_acc >= 0.9,
        "no-call accuracy {nocall_acc}\n{}",
        e2e.nocall_stdout
    );
    assert!(
        e2e.build_seconds < 120.0,
        "end-to-end took {:.1} s",
        e2e.build_seconds
    );
    pass(10, "synthetic E2E: macro-precision >= 0.9, no-call accuracy >= 0.9, < 120 s");
}

// ----------------------------------------------------------------- 11

#[test]
fn criterion_11_feature_dimension_contract() {
    let e2e = e2e();
    let (rows, _) = load_dataset(&e2e.dataset_dir).unwrap();
    assert!(!rows.is_empty());
    for variant in [
        Variant::M1,
        Variant::M2,
        Variant::M3,
        Variant::M4,
        Variant::Concat5s,
        Variant::LogitSoftmax,
    ] {
        let expected = variant.dim(320, 3337);
        let (features, _) = build_features(&rows, variant).unwrap();
        assert!(!features.is_empty(), "{} emitted nothing", variant.name());
        for f in &features {
            assert_eq!(
                f.values.len(),
                expected,
                "variant {} produced dim {}",
                variant.name(),
                f.values.len()
            );
        }
    }
    pass(11, "every emitted feature matches its variant dimension (320/640/960/3337)");
}

// ----------------------------------------------------------------- 12

#[test]
fn criterion_12_inference_shape() {
    let e2e = e2e();
    let dir = tempfile::tempdir().unwrap();
    let config = CorpusConfig::default();
    let samples = soundscape(&config, 600.0, 9);
    let wav = dir.path().join("scape600.wav");
    embercall_core::audio::write_wav(
        &AudioClip::new(samples, config.rate, "scape600").unwrap(),
        &wav,
    )
    .unwrap();
    let out_csv = dir.path().join("submission.csv");
    run_ok(bin().args([
        "infer",
        "--model",
        e2e.model_path.to_str().unwrap(),
        "--soundscape",
        wav.to_str().unwrap(),
        "--taxonomy",
        e2e.corpus.taxonomy_path.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 121, "expected header + 120 rows");
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header[0], "row_id");
    assert_eq!(header.len(), 265, "expected row_id + 264 species columns");
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 265);
        assert_eq!(fields[0], format!("scape600_{}", (i + 1) * 5));
        for p in &fields[1..] {
            let p: f64 = p.parse().unwrap();
            assert!((0.0..=1.0).contains(&p), "probability {p} out of range");
        }
    }
    pass(12, "600 s soundscape yields 120 rows x 264 species, probabilities in [0,1]");
}

// ----------------------------------------------------------------- 13

#[test]
fn criterion_13_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(30, 4, 2.0, 13);
    let nonneg = {
        let mut d = data.clone();
        d.x.mapv_inplace(f64::abs);
        d
    };
    let mut models: Vec<(&str, TrainedModel)> = vec![
        ("logreg", ModelSpec::Logreg { lambda: 1e-3 }.fit(&data).unwrap()),
        ("cnb", ModelSpec::Cnb { alpha: 1.0 }.fit(&nonneg).unwrap()),
        (
            "mlp",
            ModelSpec::Mlp {
                hidden: 6,
                learning_rate: 0.1,
                epochs: 50,
                batch_size: 16,
                seed: 1,
            }
            .fit(&data)
            .unwrap(),
        ),
        ("ovr", ModelSpec::Ovr { lambda: 1e-3 }.fit(&data).unwrap()),
    ];
    let (stack, _) = fit_stack(
        &[
            BaseSpec::from(ModelSpec::Logreg { lambda: 1e-3 }),
            BaseSpec::from(ModelSpec::Ovr { lambda: 1e-2 }),
        ],
        &data,
        3,
        0,
    )
    .unwrap();
    models.push(("stack", TrainedModel::Stack(stack)));

    for (name, model) in &models {
        let path = dir.path().join(format!("{name}.model"));
        save_model(&path, model, &ModelFileMeta::default()).unwrap();
        let (loaded, _) = load_model(&path).unwrap();
        let x = if *name == "cnb" { &nonneg.x } else { &data.x };
        let before = model.predict_proba(x);
        let after = loaded.predict_proba(x);
        assert_eq!(before.dim(), after.dim());
        for (a, b) in before.iter().zip(after.iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "{name} round-trip not bit-exact");
        }
    }
    pass(13, "save/load reproduces predictions bit-for-bit for every family");
}
