//! Synthetic corpora: band-limited chirp "species", noise beds, and a
//! taxonomy calibrated against the synthetic embedder. Everything is
//! seeded and deterministic so end-to-end runs are reproducible.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{resample, write_wav, AudioClip};
use crate::backends::Embedder;
use crate::error::{Error, Result};

/// `sp001`, `sp002`, ... synthetic species codes.
pub fn species_code(index: usize) -> String {
    format!("sp{:03}", index + 1)
}

/// Frequency band of synthetic species `index`, aligned with the
/// separator's equal partition of `[0, nyquist)` into `num_bands`.
pub fn species_band(index: usize, num_bands: usize, nyquist: f64) -> (f64, f64) {
    let width = nyquist / num_bands as f64;
    (index as f64 * width, (index + 1) as f64 * width)
}

pub fn tone(freq: f64, rate: u32, duration_s: f64, amplitude: f32) -> Vec<f32> {
    let n = (duration_s * rate as f64).round() as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            amplitude * (2.0 * PI * freq * t).sin() as f32
        })
        .collect()
}

/// Linear sweep from `f0` to `f1` over the whole duration.
pub fn chirp(f0: f64, f1: f64, rate: u32, duration_s: f64, amplitude: f32) -> Vec<f32> {
    let n = (duration_s * rate as f64).round() as usize;
    let total = duration_s.max(1e-9);
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            // instantaneous phase of a linear chirp
            let phase = 2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / total * t * t);
            amplitude * phase.sin() as f32
        })
        .collect()
}

pub fn noise(rate: u32, duration_s: f64, amplitude: f32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * rate as f64).round() as usize;
    (0..n)
        .map(|_| rng.gen_range(-amplitude..=amplitude))
        .collect()
}

fn mix(into: &mut [f32], from: &[f32]) {
    for (a, b) in into.iter_mut().zip(from) {
        *a += b;
    }
}

/// A species vocalization: chirps sweeping the middle 80% of the band,
/// one sweep per second, over a faint noise bed.
pub fn species_signal(
    band: (f64, f64),
    rate: u32,
    duration_s: f64,
    seed: u64,
) -> Vec<f32> {
    let width = band.1 - band.0;
    let (f0, f1) = (band.0 + 0.1 * width, band.1 - 0.1 * width);
    let mut samples = noise(rate, duration_s, 0.02, seed);
    let sweep = chirp(f0, f1, rate, 1.0, 0.5);
    let per_second = rate as usize;
    let mut offset = 0;
    while offset < samples.len() {
        let end = (offset + per_second).min(samples.len());
        mix(&mut samples[offset..end], &sweep[..end - offset]);
        offset = end;
    }
    samples
}

/// Map each species' calibration signal to the backend class the
/// embedder actually assigns it, then fill the remaining species codes
/// onto unused class indices. Returns the taxonomy CSV text.
pub fn calibrated_taxonomy_csv(
    embedder: &dyn Embedder,
    signal_rate: u32,
    num_species: usize,
    total_species: usize,
    band_nyquist: f64,
) -> Result<String> {
    if total_species < num_species {
        return Err(Error::Config(format!(
            "total_species {total_species} < calibrated species {num_species}"
        )));
    }
    if total_species > embedder.class_dim() {
        return Err(Error::Config(format!(
            "total_species {total_species} exceeds backend class count {}",
            embedder.class_dim()
        )));
    }
    let mut assigned: Vec<usize> = Vec::with_capacity(num_species);
    for k in 0..num_species {
        let band = species_band(k, num_species, band_nyquist);
        let clip = AudioClip {
            samples: species_signal(band, signal_rate, 3.0, k as u64),
            sample_rate: signal_rate,
            stem: format!("calibration_{k}"),
        };
        let clip = resample(&clip, embedder.declared_rate())?;
        let outputs = embedder.embed_windows(&clip)?;
        let logits = &outputs[0].logits;
        let argmax = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if assigned.contains(&argmax) {
            return Err(Error::Config(format!(
                "species {k} collides with an earlier species on backend class {argmax}"
            )));
        }
        assigned.push(argmax);
    }

    let mut csv = String::from("backend_class_index,backend_label,species_code\n");
    for (k, &class) in assigned.iter().enumerate() {
        csv.push_str(&format!("{class},Synthetic class {class},{}\n", species_code(k)));
    }
    // remaining species codes claim the lowest unused class indices
    let mut next_class = 0;
    for k in num_species..total_species {
        while assigned.contains(&next_class) {
            next_class += 1;
        }
        csv.push_str(&format!(
            "{next_class},Synthetic class {next_class},{}\n",
            species_code(k)
        ));
        assigned.push(next_class);
    }
    Ok(csv)
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    /// Species with calibrated bands and their own tracks.
    pub num_species: usize,
    pub tracks_per_species: usize,
    /// Weakly labeled tracks that contain only noise (no calls).
    pub noise_tracks: usize,
    /// Duration of every track, seconds.
    pub duration_s: f64,
    /// Recording rate of the corpus WAV files.
    pub rate: u32,
    /// Species codes listed in the taxonomy (≥ num_species).
    pub total_species: usize,
    /// Nyquist of the separation stage; species bands align to it.
    pub band_nyquist: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            num_species: 4,
            tracks_per_species: 3,
            noise_tracks: 4,
            duration_s: 12.0,
            rate: 32_000,
            total_species: 264,
            band_nyquist: 16_000.0,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct SynthCorpus {
    /// `track_stem,wav_path,primary_label,secondary_labels` CSV.
    pub manifest_path: PathBuf,
    pub taxonomy_path: PathBuf,
    /// (stem, primary species, has actual calls)
    pub tracks: Vec<(String, String, bool)>,
}

/// Write WAV tracks, the corpus manifest, and a calibrated taxonomy
/// under `dir`. Noise-only tracks still carry a (wrong) primary label,
/// like weakly labeled recordings with no audible call.
pub fn write_corpus(
    dir: &Path,
    config: &CorpusConfig,
    embedder: &dyn Embedder,
) -> Result<SynthCorpus> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let taxonomy_csv = calibrated_taxonomy_csv(
        embedder,
        config.rate,
        config.num_species,
        config.total_species,
        config.band_nyquist,
    )?;
    let taxonomy_path = dir.join("taxonomy.csv");
    std::fs::write(&taxonomy_path, taxonomy_csv).map_err(|e| Error::io(&taxonomy_path, e))?;

    let mut manifest = String::from("track_stem,wav_path,primary_label,secondary_labels\n");
    let mut tracks = Vec::new();
    let mut track_index = 0usize;
    let mut emit = |samples: Vec<f32>,
                    primary: &str,
                    has_calls: bool,
                    manifest: &mut String,
                    tracks: &mut Vec<(String, String, bool)>|
     -> Result<()> {
        let stem = format!("XC{:06}", 100_000 + track_index);
        track_index += 1;
        let path = dir.join(format!("{stem}.wav"));
        write_wav(
            &AudioClip {
                samples,
                sample_rate: config.rate,
                stem: stem.clone(),
            },
            &path,
        )?;
        manifest.push_str(&format!("{stem},{},{primary},\n", path.display()));
        tracks.push((stem, primary.to_string(), has_calls));
        Ok(())
    };

    for k in 0..config.num_species {
        let band = species_band(k, config.num_species, config.band_nyquist);
        let code = species_code(k);
        for t in 0..config.tracks_per_species {
            let seed = config
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add((k * 1000 + t) as u64);
            let samples = species_signal(band, config.rate, config.duration_s, seed);
            emit(samples, &code, true, &mut manifest, &mut tracks)?;
        }
    }
    for t in 0..config.noise_tracks {
        let seed = config.seed.wrapping_mul(7_000_003).wrapping_add(t as u64);
        let samples = noise(config.rate, config.duration_s, 0.3, seed);
        // weak label: attribute the silence to a rotating species
        let code = species_code(t % config.num_species);
        emit(samples, &code, false, &mut manifest, &mut tracks)?;
    }

    let manifest_path = dir.join("corpus.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(SynthCorpus {
        manifest_path,
        taxonomy_path,
        tracks,
    })
}

/// A long soundscape alternating species calls and noise-only stretches.
pub fn soundscape(config: &CorpusConfig, duration_s: f64, seed: u64) -> Vec<f32> {
    let mut samples = noise(config.rate, duration_s, 0.05, seed);
    let segment = 5.0 * config.rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut offset = 0usize;
    while offset < samples.len() {
        let end = ((offset as f64 + segment) as usize).min(samples.len());
        // roughly half the 5 s segments carry a call
        if rng.gen_bool(0.5) {
            let k = rng.gen_range(0..config.num_species);
            let band = species_band(k, config.num_species, config.band_nyquist);
            let call = species_signal(
                band,
                config.rate,
                (end - offset) as f64 / config.rate as f64,
                rng.gen(),
            );
            mix(&mut samples[offset..end], &call);
        }
        offset = end;
    }
    samples
}
