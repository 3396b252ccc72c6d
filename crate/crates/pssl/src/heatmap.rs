//! Error-grid evaluation in parallel, CSV round trip and SVG rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;

use pssl_core::geometry::Point2;
use pssl_core::tdoa::{error_row, estimate_source, ErrorGrid, GridSpec, TdoaSet};

/// Rows are evaluated in parallel; every cell is a pure function of its
/// node, so the result equals the sequential evaluation bit for bit.
pub fn error_grid_parallel(spec: &GridSpec, tdoas: &TdoaSet, mics: &[Point2], c: f64) -> Result<ErrorGrid> {
    ensure!(tdoas.num_mics() == mics.len(), "delays for {} microphones, {} positions", tdoas.num_mics(), mics.len());
    ensure!(c > 0.0, "speed of sound {c}");
    let mut cells = vec![0.0; spec.len()];
    if spec.cols > 0 {
        cells.par_chunks_mut(spec.cols).enumerate().for_each(|(row, chunk)| error_row(spec, tdoas, mics, c, row, chunk));
    }
    Ok(ErrorGrid::new(*spec, cells)?)
}

/// One line per node: `row,col,x,y,resolution,error`, row-major.
pub fn write_grid_csv(path: &Path, grid: &ErrorGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["row", "col", "x", "y", "resolution", "error"])?;
    for r in 0..grid.spec.rows {
        for c in 0..grid.spec.cols {
            let p = grid.spec.node(r, c);
            w.write_record([
                r.to_string(),
                c.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                grid.spec.resolution.to_string(),
                grid.get(r, c).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_csv(path: &Path) -> Result<ErrorGrid> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        ensure!(rec.len() == 6, "{}: expected 6 columns", path.display());
        let f = |i: usize| -> Result<f64> { Ok(rec[i].parse::<f64>()?) };
        rows.push((rec[0].parse::<usize>()?, rec[1].parse::<usize>()?, f(2)?, f(3)?, f(4)?, f(5)?));
    }
    let Some(first) = rows.first() else { bail!("{}: empty grid", path.display()) };
    let n_rows = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let n_cols = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    ensure!(rows.len() == n_rows * n_cols, "{}: {} cells for a {n_rows}x{n_cols} grid", path.display(), rows.len());
    let spec = GridSpec { origin: Point2::new(first.2, first.3), resolution: first.4, rows: n_rows, cols: n_cols };
    let mut cells = vec![f64::NAN; spec.len()];
    for &(r, c, _, _, _, e) in &rows {
        cells[r * n_cols + c] = e;
    }
    Ok(ErrorGrid::new(spec, cells)?)
}

/// Maps `t` in `[0, 1]` to a dark-blue to yellow ramp.
fn color(t: f64) -> String {
    let stops = [(0.05, 0.03, 0.25), (0.15, 0.40, 0.55), (0.35, 0.70, 0.45), (0.99, 0.91, 0.15)];
    let t = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let k = (t.floor() as usize).min(stops.len() - 2);
    let u = t - k as f64;
    let mix = |a: f64, b: f64| ((a + (b - a) * u) * 255.0).round() as u8;
    let (a, b) = (stops[k], stops[k + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Renders the grid on a log colour scale with the argmin marked by a
/// white ring and, when given, the true source by a red cross. Large grids
/// are shown at reduced resolution, each block coloured by its minimum.
pub fn grid_svg(grid: &ErrorGrid, truth: Option<Point2>) -> Result<String> {
    let est = estimate_source(grid)?;
    let spec = grid.spec;
    let stride = spec.rows.max(spec.cols).div_ceil(120).max(1);
    let (br, bc) = (spec.rows.div_ceil(stride), spec.cols.div_ceil(stride));
    let mut blocks = vec![f64::INFINITY; br * bc];
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let b = &mut blocks[(r / stride) * bc + c / stride];
            *b = b.min(grid.get(r, c));
        }
    }
    let floor = grid.cells.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let level = |v: f64| v.max(floor).log10();
    let (lo, hi) = blocks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(level(v)), hi.max(level(v))));
    let span = if hi > lo { hi - lo } else { 1.0 };

    // x grows to the right, y grows upwards as in a floor plan.
    let px = 4.0;
    let (w, h) = (br as f64 * px, bc as f64 * px);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#)?;
    for r in 0..br {
        for c in 0..bc {
            let v = blocks[r * bc + c];
            writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{px}" height="{px}" fill="{}"/>"#,
                r as f64 * px,
                h - (c + 1) as f64 * px,
                color((level(v) - lo) / span)
            )?;
        }
    }
    let to_px = |p: Point2| {
        let span_x = (spec.rows.max(2) - 1) as f64 * spec.resolution;
        let span_y = (spec.cols.max(2) - 1) as f64 * spec.resolution;
        ((p.x - spec.origin.x) / span_x * (w - px) + px / 2.0, h - ((p.y - spec.origin.y) / span_y * (h - px) + px / 2.0))
    };
    let (ex, ey) = to_px(est.position);
    writeln!(s, r#"<circle cx="{ex:.2}" cy="{ey:.2}" r="6" fill="none" stroke="white" stroke-width="2"/>"#)?;
    if let Some(t) = truth {
        let (tx, ty) = to_px(t);
        writeln!(
            s,
            r#"<path d="M{} {}L{} {}M{} {}L{} {}" stroke="red" stroke-width="2"/>"#,
            tx - 5.0,
            ty - 5.0,
            tx + 5.0,
            ty + 5.0,
            tx - 5.0,
            ty + 5.0,
            tx + 5.0,
            ty - 5.0
        )?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn export_heatmap(grid: &ErrorGrid, dir: &Path, stem: &str, truth: Option<Point2>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_grid_csv(&dir.join(format!("{stem}.csv")), grid)?;
    fs::write(dir.join(format!("{stem}.svg")), grid_svg(grid, truth)?)?;
    Ok(())
}
