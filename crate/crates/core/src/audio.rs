//! Raw audio handling: loading, chunking, padding, windowing, and energy.
//!
//! Everything here is a pure function of its inputs. The chunking and
//! padding rules are the deterministic front half of the dataset build:
//! tracks are recursively halved until no part exceeds the chunk
//! threshold, then each part is padded to a whole multiple of the window
//! length with seeded white noise.

use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Mono sample buffer with its sample rate. The unit of chunking,
/// separation, and windowing.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Amplitudes in [-1, 1].
    pub samples: Vec<f32>,
    /// Sample rate in Hz.
    pub sample_rate: u32,
    /// Source identifier, e.g. `XC629875` or `XC629875_part003`.
    pub stem: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, stem: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidAudio("empty sample buffer".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidAudio("non-finite sample".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            stem: stem.into(),
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// One part of a recursively chunked track, as sample offsets into the
/// parent buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPart {
    pub part_index: usize,
    pub start_sample: usize,
    pub end_sample: usize,
}

/// Contiguous, non-overlapping cover of a parent track.
#[derive(Debug, Clone)]
pub struct ChunkPlan {
    pub parent_stem: String,
    pub sample_rate: u32,
    pub parts: Vec<ChunkPart>,
}

impl ChunkPlan {
    /// Chunk stems are formatted `{stem}_part{NNN}` with a 3-digit index.
    pub fn part_stem(&self, part_index: usize) -> String {
        chunk_stem(&self.parent_stem, part_index)
    }

    /// Extract the samples of one part as a standalone clip.
    pub fn extract(&self, parent: &AudioClip, part_index: usize) -> Result<AudioClip> {
        let part = self
            .parts
            .get(part_index)
            .ok_or_else(|| Error::InvalidAudio(format!("no part {part_index}")))?;
        AudioClip::new(
            parent.samples[part.start_sample..part.end_sample].to_vec(),
            parent.sample_rate,
            self.part_stem(part_index),
        )
    }
}

pub fn chunk_stem(parent_stem: &str, part_index: usize) -> String {
    format!("{parent_stem}_part{part_index:03}")
}

/// Binary recursive midpoint split: a segment longer than `threshold_s`
/// is halved (floor at sample granularity) until every part fits.
pub fn recursive_chunk(clip: &AudioClip, threshold_s: f64) -> Result<ChunkPlan> {
    plan_chunks(clip.samples.len(), clip.sample_rate, &clip.stem, threshold_s)
}

/// Same split computed from a sample count alone, so a plan can be made
/// from a WAV header without decoding audio.
pub fn plan_chunks(
    frames: usize,
    sample_rate: u32,
    parent_stem: &str,
    threshold_s: f64,
) -> Result<ChunkPlan> {
    if threshold_s <= 0.0 {
        return Err(Error::InvalidAudio("threshold_s must be positive".into()));
    }
    let rate = sample_rate as f64;
    let mut parts = Vec::new();
    let mut stack = vec![(0usize, frames)];
    // Depth-first, left segment first, so parts come out in temporal order.
    while let Some((start, end)) = stack.pop() {
        let duration = (end - start) as f64 / rate;
        if duration > threshold_s && end - start >= 2 {
            let mid = start + (end - start) / 2;
            stack.push((mid, end));
            stack.push((start, mid));
        } else {
            parts.push(ChunkPart {
                part_index: parts.len(),
                start_sample: start,
                end_sample: end,
            });
        }
    }
    Ok(ChunkPlan {
        parent_stem: parent_stem.to_string(),
        sample_rate,
        parts,
    })
}

/// Deterministic per-chunk noise seed derived from (stem, part_index).
pub fn chunk_noise_seed(stem: &str, part_index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(stem.as_bytes());
    hasher.update(b"/");
    hasher.update(part_index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Append uniform white noise in [-noise_amplitude, +noise_amplitude]
/// until the duration is the smallest multiple of `multiple_s` at or
/// above the original duration. The original samples are untouched.
pub fn pad_to_multiple(
    clip: &AudioClip,
    multiple_s: u32,
    noise_amplitude: f32,
    seed: u64,
) -> Result<AudioClip> {
    if multiple_s == 0 {
        return Err(Error::InvalidAudio("multiple_s must be positive".into()));
    }
    if noise_amplitude < 0.0 {
        return Err(Error::InvalidAudio(
            "noise_amplitude must be nonnegative".into(),
        ));
    }
    let block = multiple_s as usize * clip.sample_rate as usize;
    let len = clip.samples.len();
    let target = len.div_ceil(block) * block;
    if target == len {
        return Ok(clip.clone());
    }
    let mut samples = Vec::with_capacity(target);
    samples.extend_from_slice(&clip.samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if noise_amplitude == 0.0 {
        samples.resize(target, 0.0);
    } else {
        let dist = Uniform::new_inclusive(-noise_amplitude, noise_amplitude);
        while samples.len() < target {
            samples.push(dist.sample(&mut rng));
        }
    }
    AudioClip::new(samples, clip.sample_rate, clip.stem.clone())
}

/// One 3-second (or `window_s`) analysis window at a whole-second start.
#[derive(Debug, Clone)]
pub struct AudioWindow {
    /// Start offset in whole seconds.
    pub start_time: u32,
    pub samples: Vec<f32>,
}

/// Sliding windows at start times 0, hop, 2*hop, ... with
/// start + window_s <= duration.
pub fn slide_windows(clip: &AudioClip, window_s: u32, hop_s: u32) -> Result<Vec<AudioWindow>> {
    if window_s == 0 || hop_s == 0 {
        return Err(Error::InvalidAudio(
            "window_s and hop_s must be positive".into(),
        ));
    }
    let rate = clip.sample_rate as usize;
    let window_len = window_s as usize * rate;
    if clip.samples.len() < window_len {
        return Err(Error::ClipTooShort {
            actual: clip.duration_seconds(),
            required: window_s as f64,
        });
    }
    let mut windows = Vec::new();
    let mut start_s = 0u32;
    loop {
        let start = start_s as usize * rate;
        if start + window_len > clip.samples.len() {
            break;
        }
        windows.push(AudioWindow {
            start_time: start_s,
            samples: clip.samples[start..start + window_len].to_vec(),
        });
        start_s += hop_s;
    }
    Ok(windows)
}

/// Mean squared amplitude.
pub fn energy(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    sum / samples.len() as f64
}

/// Linear-interpolation resampling. Identity (bit-exact) when the rates
/// already match.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidAudio("target_rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let n_out = ((src.len() as u64 * target_rate as u64) / clip.sample_rate as u64).max(1) as usize;
    let ratio = clip.sample_rate as f64 / target_rate as f64;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let pos = i as f64 * ratio;
        let lo = pos.floor() as usize;
        if lo + 1 >= src.len() {
            out.push(src[src.len() - 1]);
        } else {
            let frac = (pos - lo as f64) as f32;
            out.push(src[lo] * (1.0 - frac) + src[lo + 1] * frac);
        }
    }
    AudioClip::new(out, target_rate, clip.stem.clone())
}

/// Read a mono WAV file (PCM 16-bit or 32-bit float). Multi-channel
/// inputs are averaged to mono.
pub fn load_wav(path: &Path, stem: impl Into<String>) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::parse(path, format!("wav open: {e}")))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, format!("wav decode: {e}")))?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, format!("wav decode: {e}")))?
        }
    };
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    AudioClip::new(samples, spec.sample_rate, stem)
}

/// Duration in seconds read from the WAV header without decoding samples.
pub fn wav_duration_seconds(path: &Path) -> Result<f64> {
    let (frames, rate) = wav_frames(path)?;
    Ok(frames as f64 / rate as f64)
}

/// (frame count, sample rate) from the WAV header alone.
pub fn wav_frames(path: &Path) -> Result<(usize, u32)> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::parse(path, format!("wav open: {e}")))?;
    let spec = reader.spec();
    Ok((reader.duration() as usize, spec.sample_rate))
}

/// Write a clip as 32-bit float WAV. Atomic: temp file + rename.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let tmp = temp_sibling(path);
    {
        let mut writer = hound::WavWriter::create(&tmp, spec)
            .map_err(|e| Error::parse(&tmp, format!("wav create: {e}")))?;
        for &s in &clip.samples {
            writer
                .write_sample(s)
                .map_err(|e| Error::parse(&tmp, format!("wav write: {e}")))?;
        }
        writer
            .finalize()
            .map_err(|e| Error::parse(&tmp, format!("wav finalize: {e}")))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Temp path in the same directory as `path` so rename stays atomic.
pub(crate) fn temp_sibling(path: &Path) -> std::path::PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.tmp.{}", std::process::id()))
}
