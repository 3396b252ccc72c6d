//! Least-squares localization of every sample in a manifest.

use std::path::Path;

use anyhow::{Context, Result};

use pssl_core::geometry::Point2;
use pssl_core::tdoa::{estimate_source, pairwise_tdoas_with, ErrorGrid, GridSpec, LsEstimate};

use crate::heatmap::{error_grid_parallel, export_heatmap};
use crate::manifest::{Manifest, Record};
use crate::wav::read_canonical;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsOptions {
    pub resolution: f64,
    pub speed_of_sound: f64,
    /// Parabolic sub-sample refinement of each delay.
    pub interpolate: bool,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self { resolution: 0.02, speed_of_sound: pssl_core::room::SPEED_OF_SOUND, interpolate: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsRow {
    pub id: String,
    pub estimate: LsEstimate,
    pub truth: Point2,
    pub error: f64,
}

pub fn localize_record(manifest: &Manifest, r: &Record, opts: &LsOptions) -> Result<(ErrorGrid, LsRow)> {
    let audio = read_canonical(&manifest.audio_path(r))?;
    let scene = r.scene()?;
    let tdoas =
        pairwise_tdoas_with(&audio, &scene.mics, opts.speed_of_sound, opts.interpolate).with_context(|| format!("sample {}", r.id))?;
    let spec = GridSpec::for_room(scene.room.width, scene.room.length, opts.resolution)?;
    let grid = error_grid_parallel(&spec, &tdoas, &scene.mics, opts.speed_of_sound)?;
    let estimate = estimate_source(&grid)?;
    let error = estimate.position.distance(scene.source);
    Ok((grid, LsRow { id: r.id.clone(), estimate, truth: scene.source, error }))
}

/// Localizes every record; with `heatmap_dir`, also writes each grid.
pub fn localize_manifest(manifest: &Manifest, opts: &LsOptions, heatmap_dir: Option<&Path>) -> Result<Vec<LsRow>> {
    let mut rows = Vec::with_capacity(manifest.len());
    for r in &manifest.records {
        let (grid, row) = localize_record(manifest, r, opts)?;
        if let Some(dir) = heatmap_dir {
            export_heatmap(&grid, dir, &r.id, Some(row.truth))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Columns: id, estimate, error to the truth, grid minimum, sharpness.
pub fn write_report(path: &Path, rows: &[LsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["id", "x_hat", "y_hat", "error_m", "min_error_s2", "peak_sharpness"])?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.estimate.position.x.to_string(),
            r.estimate.position.y.to_string(),
            r.error.to_string(),
            r.estimate.min_error.to_string(),
            r.estimate.peak_sharpness.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
