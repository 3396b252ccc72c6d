//! GCC-PHAT time-difference estimation and least-squares grid search.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::geometry::Point2;
use crate::signal::{MonoSignal, MultichannelAudio};

/// `(|mi - p| - |mj - p|) / c`: positive when the wavefront reaches `mj` first.
pub fn theoretical_tdoa(mi: Point2, mj: Point2, p: Point2, c: f64) -> f64 {
    (mi.distance(p) - mj.distance(p)) / c
}

/// Delay of `yi` relative to `yj` in seconds, from the peak of the
/// phase-transform weighted cross-correlation within `±max_lag` samples.
/// A positive result means `yi` lags `yj`.
pub fn gcc_phat(yi: &MonoSignal, yj: &MonoSignal, max_lag: usize, interpolate: bool) -> Result<f64> {
    if yi.len() != yj.len() {
        return Err(Error::ShapeMismatch(format!("signal lengths {} and {}", yi.len(), yj.len())));
    }
    if yi.sample_rate() != yj.sample_rate() {
        return Err(Error::SampleRateMismatch { expected: yi.sample_rate(), got: yj.sample_rate() });
    }
    let n = yi.len();
    if n == 0 {
        return Err(Error::Empty("signal"));
    }
    if max_lag > n / 2 {
        return Err(Error::InvalidArgument(format!("max_lag {max_lag} exceeds half the signal length {n}")));
    }
    if yi.energy() == 0.0 {
        return Err(Error::ZeroEnergy(0));
    }
    if yj.energy() == 0.0 {
        return Err(Error::ZeroEnergy(1));
    }

    let size = (2 * n).next_power_of_two();
    let fft = Fft::new(size)?;
    let spectrum = |y: &MonoSignal| {
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (b, &s) in buf.iter_mut().zip(y.samples()) {
            b.re = s;
        }
        fft.forward(&mut buf);
        buf
    };
    let xi = spectrum(yi);
    let xj = spectrum(yj);
    let mut cross: Vec<Complex64> = xi.iter().zip(&xj).map(|(a, b)| a * b.conj()).collect();
    let peak_mag = cross.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let eps = 1e-12 * peak_mag;
    for g in &mut cross {
        *g /= g.norm() + eps;
    }
    fft.inverse(&mut cross);

    let at = |lag: isize| cross[lag.rem_euclid(size as isize) as usize].re;
    let max_lag = max_lag as isize;
    let mut best = 0isize;
    let mut best_val = f64::NEG_INFINITY;
    for lag in -max_lag..=max_lag {
        let v = at(lag);
        if v > best_val {
            best_val = v;
            best = lag;
        }
    }
    let mut delay = best as f64;
    if interpolate {
        let (l, m, r) = (at(best - 1), best_val, at(best + 1));
        let denom = l - 2.0 * m + r;
        if denom < 0.0 {
            let shift = 0.5 * (l - r) / denom;
            delay = (delay + shift.clamp(-0.5, 0.5)).clamp(-max_lag as f64, max_lag as f64);
        }
    }
    Ok(delay / yi.sample_rate() as f64)
}

/// Estimated delays for every ordered microphone pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaSet {
    mics: usize,
    pairs: Vec<(usize, usize, f64)>,
}

impl TdoaSet {
    /// Builds the set from delays for `i < j` in lexicographic order,
    /// filling in `j, i` with the negated value.
    pub fn from_upper(mics: usize, upper: &[f64]) -> Result<Self> {
        let expected = mics * mics.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(Error::ShapeMismatch(format!("{} delays for {mics} microphones, expected {expected}", upper.len())));
        }
        let mut pairs = Vec::with_capacity(2 * expected);
        let mut k = 0;
        for i in 0..mics {
            for j in i + 1..mics {
                pairs.push((i, j, upper[k]));
                pairs.push((j, i, -upper[k]));
                k += 1;
            }
        }
        Ok(Self { mics, pairs })
    }

    /// Exact delays for a source at `p`.
    pub fn theoretical(mics: &[Point2], p: Point2, c: f64) -> Self {
        let mut upper = Vec::new();
        for i in 0..mics.len() {
            for j in i + 1..mics.len() {
                upper.push(theoretical_tdoa(mics[i], mics[j], p, c));
            }
        }
        Self::from_upper(mics.len(), &upper).expect("length matches by construction")
    }

    pub fn num_mics(&self) -> usize {
        self.mics
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.pairs.iter().find(|&&(a, b, _)| a == i && b == j).map(|&(_, _, t)| t)
    }
}

/// Search bound for a pair: the physical maximum delay plus two samples.
pub fn max_lag_samples(mi: Point2, mj: Point2, c: f64, sample_rate: u32) -> usize {
    libm::floor(mi.distance(mj) / c * sample_rate as f64 + 2.0) as usize
}

pub fn pairwise_tdoas(audio: &MultichannelAudio, mics: &[Point2], c: f64) -> Result<TdoaSet> {
    pairwise_tdoas_with(audio, mics, c, true)
}

pub fn pairwise_tdoas_with(audio: &MultichannelAudio, mics: &[Point2], c: f64, interpolate: bool) -> Result<TdoaSet> {
    let m = audio.num_channels();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 microphones, got {m}")));
    }
    if mics.len() != m {
        return Err(Error::ShapeMismatch(format!("{m} channels but {} microphone positions", mics.len())));
    }
    if c <= 0.0 {
        return Err(Error::InvalidArgument(format!("speed of sound {c}")));
    }
    let ch = audio.channels();
    let fs = audio.sample_rate();
    let mut upper = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let lag = max_lag_samples(mics[i], mics[j], c, fs).min(audio.len() / 2);
            upper.push(gcc_phat(&ch[i], &ch[j], lag, interpolate).map_err(|e| match e {
                Error::ZeroEnergy(0) => Error::ZeroEnergy(i),
                Error::ZeroEnergy(_) => Error::ZeroEnergy(j),
                e => e,
            })?);
        }
    }
    TdoaSet::from_upper(m, &upper)
}

/// Node layout of an error grid. Node `(ix, iy)` sits at
/// `origin + (ix, iy) * resolution`; cells are stored with `ix` as the row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point2,
    pub resolution: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    /// Grid over `[0, width] x [0, length]`.
    pub fn for_room(width: f64, length: f64, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidArgument(format!("grid resolution {resolution}")));
        }
        if resolution > width || resolution > length {
            return Err(Error::InvalidArgument(format!("grid resolution {resolution} exceeds room {width} x {length}")));
        }
        let count = |d: f64| libm::floor(d / resolution + 1e-9) as usize + 1;
        Ok(Self { origin: Point2::new(0.0, 0.0), resolution, rows: count(width), cols: count(length) })
    }

    pub fn node(&self, row: usize, col: usize) -> Point2 {
        Point2::new(self.origin.x + row as f64 * self.resolution, self.origin.y + col as f64 * self.resolution)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Total squared delay mismatch (s²) at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGrid {
    pub spec: GridSpec,
    pub cells: Vec<f64>,
}

impl ErrorGrid {
    pub fn new(spec: GridSpec, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != spec.len() {
            return Err(Error::ShapeMismatch(format!("{} cells for a {}x{} grid", cells.len(), spec.rows, spec.cols)));
        }
        if cells.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::NonFinite("error grid cells must be finite and non-negative".into()));
        }
        Ok(Self { spec, cells })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.spec.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.cells[row * self.spec.cols..(row + 1) * self.spec.cols]
    }
}

fn check_tdoas(tdoas: &TdoaSet, mics: &[Point2], c: f64) -> Result<()> {
    if tdoas.num_mics() != mics.len() {
        return Err(Error::ShapeMismatch(format!("delays for {} microphones, {} positions", tdoas.num_mics(), mics.len())));
    }
    if c <= 0.0 {
        return Err(Error::InvalidArgument(format!("speed of sound {c}")));
    }
    Ok(())
}

/// Fills one grid row. Row results do not depend on each other, so rows may
/// be evaluated in any order or in parallel.
pub fn error_row(spec: &GridSpec, tdoas: &TdoaSet, mics: &[Point2], c: f64, row: usize, out: &mut [f64]) {
    let mut dist = vec![0.0; mics.len()];
    for (col, cell) in out.iter_mut().enumerate().take(spec.cols) {
        let p = spec.node(row, col);
        for (d, m) in dist.iter_mut().zip(mics) {
            *d = m.distance(p);
        }
        let mut e = 0.0;
        for &(i, j, measured) in tdoas.pairs() {
            let r = (dist[i] - dist[j]) / c - measured;
            e += r * r;
        }
        *cell = e;
    }
}

pub fn error_grid(tdoas: &TdoaSet, mics: &[Point2], width: f64, length: f64, resolution: f64, c: f64) -> Result<ErrorGrid> {
    let spec = GridSpec::for_room(width, length, resolution)?;
    error_grid_on(&spec, tdoas, mics, c)
}

pub fn error_grid_on(spec: &GridSpec, tdoas: &TdoaSet, mics: &[Point2], c: f64) -> Result<ErrorGrid> {
    check_tdoas(tdoas, mics, c)?;
    let mut cells = vec![0.0; spec.len()];
    if spec.cols > 0 {
        for (row, chunk) in cells.chunks_mut(spec.cols).enumerate() {
            error_row(spec, tdoas, mics, c, row, chunk);
        }
    }
    ErrorGrid::new(*spec, cells)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsEstimate {
    pub position: Point2,
    pub node: (usize, usize),
    /// Smallest grid value (s²).
    pub min_error: f64,
    /// Minimum over median; values near 1 mean a flat, unreliable surface.
    pub peak_sharpness: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn estimate_source(grid: &ErrorGrid) -> Result<LsEstimate> {
    if grid.cells.is_empty() {
        return Err(Error::Empty("error grid"));
    }
    let mut best = 0;
    for (k, &v) in grid.cells.iter().enumerate() {
        if v < grid.cells[best] {
            best = k;
        }
    }
    let min_error = grid.cells[best];
    let med = median(&grid.cells);
    let peak_sharpness = if med == 0.0 { 1.0 } else { min_error / med };
    let node = (best / grid.spec.cols, best % grid.spec.cols);
    Ok(LsEstimate { position: grid.spec.node(node.0, node.1), node, min_error, peak_sharpness })
}

/// Delay estimation, grid evaluation and argmin in one call.
pub fn localize(
    audio: &MultichannelAudio,
    mics: &[Point2],
    width: f64,
    length: f64,
    resolution: f64,
    c: f64,
    interpolate: bool,
) -> Result<(ErrorGrid, LsEstimate)> {
    let tdoas = pairwise_tdoas_with(audio, mics, c, interpolate)?;
    let grid = error_grid(&tdoas, mics, width, length, resolution, c)?;
    let est = estimate_source(&grid)?;
    Ok((grid, est))
}
