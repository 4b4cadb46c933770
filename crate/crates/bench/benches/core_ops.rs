//! Criterion benchmarks for the hot core operations: windowing,
//! separation, embedding, feature assembly, and classifier training.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use embercall_core::audio::{pad_to_multiple, recursive_chunk, slide_windows, AudioClip};
use embercall_core::backends::{Embedder, Separator, SyntheticEmbedder, SyntheticSeparator};
use embercall_core::features::{FeatureVector, Variant};
use embercall_core::models::logreg::{fit_logreg, FitOptions};
use embercall_core::models::LabeledDataset;
use embercall_core::projection::fit_pca2;

fn random_clip(duration_s: f64, rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * rate as f64) as usize;
    let samples: Vec<f32> = (0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
    AudioClip::new(samples, rate, "bench").unwrap()
}

fn blob_dataset(rows_per_class: usize, dim: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    for class in 0..4 {
        let center = class as f64 - 1.5;
        for _ in 0..rows_per_class {
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

fn bench_audio(c: &mut Criterion) {
    let clip = random_clip(60.0, 8_000, 1);
    c.bench_function("slide_windows_60s", |b| {
        b.iter(|| slide_windows(&clip, 3, 1).unwrap())
    });
    c.bench_function("pad_to_multiple_60s", |b| {
        let short = random_clip(59.5, 8_000, 2);
        b.iter(|| pad_to_multiple(&short, 3, 1e-4, 7).unwrap())
    });
    c.bench_function("recursive_chunk_600s", |b| {
        let long = random_clip(600.0, 1_000, 3);
        b.iter(|| recursive_chunk(&long, 180.0).unwrap())
    });
}

fn bench_backends(c: &mut Criterion) {
    let separator = SyntheticSeparator::with_rate(8_000);
    let clip = random_clip(12.0, 8_000, 4);
    c.bench_function("separate_12s_4_sources", |b| {
        b.iter(|| separator.separate(&clip, 4).unwrap())
    });
    let embedder = SyntheticEmbedder::with_dims(0, 8_000, 320, 3337);
    c.bench_function("embed_windows_12s", |b| {
        b.iter(|| embedder.embed_windows(&clip).unwrap())
    });
}

fn bench_models(c: &mut Criterion) {
    let data = blob_dataset(50, 32, 5);
    c.bench_function("fit_logreg_200x32", |b| {
        b.iter_batched(
            || data.clone(),
            |d| fit_logreg(&d, 1e-3, &FitOptions::default()).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("fit_pca2_200x32", |b| {
        b.iter(|| fit_pca2(&data.x).unwrap())
    });
}

criterion_group!(benches, bench_audio, bench_backends, bench_models);
criterion_main!(benches);
