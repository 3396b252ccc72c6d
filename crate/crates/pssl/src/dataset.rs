//! Dataset profiles, generation, recorded-data ingestion and feature
//! loading.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::Rng;
use rayon::prelude::*;

use pssl_core::dinn::Dataset;
use pssl_core::rng::{rng_from_seed, SeededRng};
use pssl_core::room::{render_with_rirs, scene_rirs, RenderOptions, Scene};
use pssl_core::scene::{build_metadata_vector, sample_seed, MetadataMask, SceneSampler, Split};
use pssl_core::signal::{modulated_noise, multichannel_features, white_noise, MonoSignal, Snr, StftConfig, CANONICAL_SAMPLE_RATE};

use crate::manifest::{read_geometry, write_manifest, Manifest, Record};
use crate::wav::{read_canonical, read_wav, write_wav, WavFormat};

/// Where source signals come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSignal {
    WhiteNoise,
    /// Noise bursts with a speech-like envelope.
    ModulatedNoise,
    /// Excerpts of the WAV files in a folder.
    WavFolder(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetProfile {
    pub name: String,
    pub sampler: SceneSampler,
    /// Train, validation and test sample counts.
    pub counts: [usize; 3],
    pub seed: u64,
    pub source: SourceSignal,
    /// Seconds of audio kept per sample.
    pub duration: f64,
    pub sample_rate: u32,
}

/// Lowest excerpt level accepted from a WAV folder, in dBFS.
const SPEECH_RMS_FLOOR_DB: f64 = -35.0;

impl DatasetProfile {
    /// `anechoic`, `reverberant`, `toy-anechoic` or `toy-reverberant`.
    pub fn named(name: &str, seed: u64) -> Result<Self> {
        let (sampler, source) = match name.trim_start_matches("toy-") {
            "anechoic" => (SceneSampler::anechoic(), SourceSignal::WhiteNoise),
            "reverberant" => (SceneSampler::reverberant(), SourceSignal::ModulatedNoise),
            _ => bail!("unknown profile {name:?} (expected anechoic, reverberant, toy-anechoic or toy-reverberant)"),
        };
        let counts = if name.starts_with("toy-") { [2000, 500, 500] } else { [10_000, 2_500, 2_500] };
        Ok(Self { name: name.to_string(), sampler, counts, seed, source, duration: 0.5, sample_rate: CANONICAL_SAMPLE_RATE })
    }

    pub fn count(&self, split: Split) -> usize {
        self.counts[split_index(split)]
    }

    pub fn excerpt_len(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    /// Scene of sample `index` in `split` and the generator positioned
    /// right after drawing it.
    pub fn scene(&self, split: Split, index: usize) -> (Scene, SeededRng, u64) {
        let seed = sample_seed(self.seed, split, index as u64);
        let mut rng = rng_from_seed(seed);
        let scene = self.sampler.sample(&mut rng);
        (scene, rng, seed)
    }
}

pub fn split_index(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

pub fn sample_id(split: Split, index: usize) -> String {
    format!("{}-{index:05}", split.as_str())
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no WAV files in {}", dir.display());
    }
    Ok(files)
}

/// A window of `len` samples from a random file whose RMS clears the
/// floor. Multichannel files contribute their first channel.
fn speech_excerpt(files: &[PathBuf], len: usize, rate: u32, rng: &mut SeededRng) -> Result<MonoSignal> {
    let floor = 10f64.powf(SPEECH_RMS_FLOOR_DB / 20.0);
    for _ in 0..64 {
        let path = &files[rng.random_range(0..files.len())];
        let audio = read_wav(path, rate)?;
        let ch = &audio.channels()[0];
        if ch.len() < len {
            continue;
        }
        let start = rng.random_range(0..=ch.len() - len);
        let excerpt = ch.slice(start, len)?;
        if excerpt.rms() >= floor {
            return Ok(excerpt);
        }
    }
    bail!("no excerpt of {len} samples above {SPEECH_RMS_FLOOR_DB} dBFS found in 64 draws")
}

/// Scene and rendered audio of one sample, reproducible from the profile
/// alone.
pub fn render_sample(
    profile: &DatasetProfile,
    split: Split,
    index: usize,
    wavs: &[PathBuf],
) -> Result<(Scene, u64, pssl_core::signal::MultichannelAudio)> {
    let (scene, mut rng, seed) = profile.scene(split, index);
    let mut opts = RenderOptions { sample_rate: profile.sample_rate, ..RenderOptions::default() };
    let rirs = scene_rirs(&scene, &opts)?;
    // Discard the build-up so every excerpt sample carries the full
    // reverberant field.
    opts.warmup = rirs.first().map_or(0, |r| r.taps.len());
    let len = opts.warmup + profile.excerpt_len();
    let source = match &profile.source {
        SourceSignal::WhiteNoise => white_noise(len, profile.sample_rate, &mut rng)?,
        SourceSignal::ModulatedNoise => modulated_noise(len, profile.sample_rate, &mut rng)?,
        SourceSignal::WavFolder(_) => speech_excerpt(wavs, len, profile.sample_rate, &mut rng)?,
    };
    let audio = render_with_rirs(&rirs, &source, Snr::from_db(scene.snr_db), &opts, &mut rng)?;
    Ok((scene, seed, audio))
}

/// Renders every sample, writes `audio/<id>.wav` and `manifest.jsonl`
/// under `out_dir`, and returns the manifest.
pub fn generate_dataset(profile: &DatasetProfile, out_dir: &Path) -> Result<Manifest> {
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).with_context(|| format!("creating {}", audio_dir.display()))?;
    let wavs = match &profile.source {
        SourceSignal::WavFolder(dir) => list_wavs(dir)?,
        _ => Vec::new(),
    };
    let jobs: Vec<(Split, usize)> = Split::ALL.iter().flat_map(|&s| (0..profile.count(s)).map(move |i| (s, i))).collect();
    let records = jobs
        .par_iter()
        .map(|&(split, index)| {
            let (scene, seed, audio) = render_sample(profile, split, index, &wavs)?;
            let id = sample_id(split, index);
            let rel = format!("audio/{id}.wav");
            write_wav(&out_dir.join(&rel), &audio, WavFormat::Float32)?;
            Ok(Record::from_scene(id, split, rel, &scene, Some(seed)))
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&out_dir.join("manifest.jsonl"), &records)?;
    log::info!("generated {} samples ({}) in {}", records.len(), profile.name, out_dir.display());
    Ok(Manifest { root: out_dir.to_path_buf(), records })
}

/// Name of the geometry file expected in a recorded-data folder.
pub const GEOMETRY_FILE: &str = "geometry.jsonl";

/// Builds a manifest for `dir/<id>.wav` recordings described by
/// `dir/geometry.jsonl`. Every file is decoded once to check its rate and
/// channel count.
pub fn ingest_recorded(dir: &Path) -> Result<Manifest> {
    let geometry = dir.join(GEOMETRY_FILE);
    if !geometry.is_file() {
        bail!("missing geometry file {}", geometry.display());
    }
    let rows = read_geometry(&geometry)?;
    let mut records = Vec::with_capacity(rows.len());
    for g in rows {
        let audio = format!("{}.wav", g.id);
        let decoded = read_canonical(&dir.join(&audio))?;
        if decoded.num_channels() != g.mics.len() {
            bail!("{audio}: {} channels for {} microphones", decoded.num_channels(), g.mics.len());
        }
        let rec = Record { id: g.id, split: g.split, audio, room: g.room, mics: g.mics, source: g.source, snr_db: g.snr_db, seed: None };
        rec.split()?;
        rec.scene()?;
        records.push(rec);
    }
    Ok(Manifest { root: dir.to_path_buf(), records })
}

/// Network inputs of every record: stacked real/imaginary STFTs of the
/// first `excerpt_len` samples, metadata under `mask`, and the source
/// position.
pub fn load_features(manifest: &Manifest, mask: &MetadataMask, stft: &StftConfig, excerpt_len: usize) -> Result<Dataset> {
    if manifest.is_empty() {
        bail!("empty manifest");
    }
    let rows = manifest
        .records
        .par_iter()
        .map(|r| {
            let audio = read_canonical(&manifest.audio_path(r))?;
            if audio.len() < excerpt_len {
                bail!("sample {}: {} samples, need {excerpt_len}", r.id, audio.len());
            }
            let channels = audio.channels().iter().map(|c| c.slice(0, excerpt_len)).collect::<Result<Vec<_>, _>>()?;
            let audio = pssl_core::signal::MultichannelAudio::new(channels)?;
            let x = multichannel_features(&audio, stft)?;
            let phi = build_metadata_vector(&r.scene()?, mask)?;
            let shape = x.shape();
            let feats: Vec<f32> = x.values().iter().map(|&v| v as f32).collect();
            let meta: Vec<f32> = phi.values.iter().map(|&v| v as f32).collect();
            Ok((shape, feats, meta, [r.source[0] as f32, r.source[1] as f32]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Dataset::new(rows[0].0, mask.len());
    for (shape, feats, meta, target) in rows {
        if shape != data.sample_shape {
            bail!("feature shape {shape:?} differs from {:?}", data.sample_shape);
        }
        data.push(&feats, &meta, target)?;
    }
    Ok(data)
}
