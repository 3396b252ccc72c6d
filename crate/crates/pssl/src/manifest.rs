//! JSON-lines dataset manifests and ingestion geometry files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pssl_core::geometry::Point2;
use pssl_core::room::{Room, Scene, MIC_HEIGHT, SOURCE_HEIGHT};
use pssl_core::scene::Split;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomRecord {
    /// Planar width and length in metres.
    pub dims: [f64; 2],
    pub rt60: f64,
    pub height: f64,
}

/// One dataset sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub split: String,
    /// Audio path relative to the manifest's directory.
    pub audio: String,
    pub room: RoomRecord,
    pub mics: Vec<[f64; 2]>,
    pub source: [f64; 2],
    /// `null` for noiseless rendering.
    pub snr_db: Option<f64>,
    /// `null` for recorded data.
    pub seed: Option<u64>,
}

/// The ingestion geometry schema: a [`Record`] without audio and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub id: String,
    pub split: String,
    pub room: RoomRecord,
    pub mics: Vec<[f64; 2]>,
    pub source: [f64; 2],
    pub snr_db: Option<f64>,
}

impl Record {
    pub fn from_scene(id: String, split: Split, audio: String, scene: &Scene, seed: Option<u64>) -> Self {
        Self {
            id,
            split: split.as_str().to_string(),
            audio,
            room: RoomRecord { dims: [scene.room.width, scene.room.length], rt60: scene.room.rt60, height: scene.room.height },
            mics: scene.mics.iter().map(|m| [m.x, m.y]).collect(),
            source: [scene.source.x, scene.source.y],
            snr_db: scene.snr_db.is_finite().then_some(scene.snr_db),
            seed,
        }
    }

    pub fn scene(&self) -> Result<Scene> {
        let room = Room::new(self.room.dims[0], self.room.dims[1], self.room.height, self.room.rt60)
            .with_context(|| format!("sample {}", self.id))?;
        Ok(Scene {
            room,
            mics: self.mics.iter().map(|m| Point2::new(m[0], m[1])).collect(),
            source: Point2::new(self.source[0], self.source[1]),
            mic_height: MIC_HEIGHT,
            source_height: SOURCE_HEIGHT,
            snr_db: self.snr_db.unwrap_or(f64::INFINITY),
        })
    }

    pub fn split(&self) -> Result<Split> {
        self.split.parse().map_err(|e| anyhow::anyhow!("sample {}: {e}", self.id))
    }

    pub fn target(&self) -> [f64; 2] {
        self.source
    }
}

/// A manifest loaded from disk, remembering where relative audio paths
/// resolve.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn audio_path(&self, r: &Record) -> PathBuf {
        self.root.join(&r.audio)
    }

    pub fn split(&self, split: Split) -> Manifest {
        Manifest { root: self.root.clone(), records: self.records.iter().filter(|r| r.split == split.as_str()).cloned().collect() }
    }

    pub fn scenes(&self) -> Result<Vec<Scene>> {
        self.records.iter().map(Record::scene).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(out)
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>, path: &Path) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            bail!("{}: duplicate sample id {id:?}", path.display());
        }
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let records: Vec<Record> = read_lines(path)?;
    check_unique_ids(records.iter().map(|r| r.id.as_str()), path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Manifest { root, records })
}

pub fn write_manifest(path: &Path, records: &[Record]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_geometry(path: &Path) -> Result<Vec<GeometryRecord>> {
    let records: Vec<GeometryRecord> = read_lines(path)?;
    check_unique_ids(records.iter().map(|r| r.id.as_str()), path)?;
    Ok(records)
}

pub fn write_geometry(path: &Path, records: &[GeometryRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

impl From<&Record> for GeometryRecord {
    fn from(r: &Record) -> Self {
        Self { id: r.id.clone(), split: r.split.clone(), room: r.room.clone(), mics: r.mics.clone(), source: r.source, snr_db: r.snr_db }
    }
}
