//! Training, evaluation and the comparison, sensitivity, relevance and
//! independence studies.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

use pssl_core::dinn::{
    euclidean_error, l1_error, predict_dataset, train, ArchitectureConfig, Dataset, Scale, TrainConfig, TrainState, Variant,
};
use pssl_core::scene::{min_config_distance, MetadataField, MetadataMask};
use pssl_core::signal::StftConfig;
use pssl_core::stats::{mean_std, summarize, Histogram, Summary};
use pssl_core::study::{perturb_metadata, relative_increase, relevance_percent, PerturbationSpec, RelevanceMask};

use crate::checkpoint::Checkpoint;
use crate::dataset::load_features;
use crate::ls::{localize_manifest, LsOptions};
use crate::manifest::Manifest;

/// Default histogram bin width (m).
pub const BIN_WIDTH: f64 = 0.15;

/// Features and metadata of one manifest, loaded once with every metadata
/// field so masked views are cheap.
#[derive(Debug, Clone)]
pub struct LoadedSet {
    pub data: Dataset,
    pub mics: usize,
    /// Largest room diagonal in the set.
    pub max_diagonal: f64,
}

impl LoadedSet {
    pub fn load(manifest: &Manifest, stft: &StftConfig, excerpt_len: usize) -> Result<Self> {
        let mics = manifest.records.first().map_or(0, |r| r.mics.len());
        ensure!(mics > 0, "manifest has no samples");
        let data = load_features(manifest, &MetadataMask::full(mics), stft, excerpt_len)?;
        let max_diagonal = manifest.records.iter().map(|r| r.room.dims[0].hypot(r.room.dims[1])).fold(0.0, f64::max);
        Ok(Self { data, mics, max_diagonal })
    }

    /// The dataset with only the metadata columns `mask` keeps.
    pub fn masked(&self, mask: &MetadataMask) -> Result<Dataset> {
        ensure!(mask.num_mics() == self.mics, "mask is for {} microphones, data has {}", mask.num_mics(), self.mics);
        let keep: Vec<usize> = mask.flags().iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect();
        if keep.len() == self.data.metadata_dim {
            return Ok(self.data.clone());
        }
        let full = self.data.metadata_dim;
        let mut out = Dataset::new(self.data.sample_shape, keep.len());
        out.features = self.data.features.clone();
        out.targets = self.data.targets.clone();
        out.metadata = self.data.metadata.chunks(full).flat_map(|row| keep.iter().map(move |&k| row[k])).collect();
        Ok(out)
    }
}

/// Everything that defines one training run besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub variant: Variant,
    pub scale: Scale,
    pub mask: MetadataMask,
    pub train: TrainConfig,
    pub stft: StftConfig,
    pub excerpt_len: usize,
}

impl RunSpec {
    pub fn new(variant: Variant, scale: Scale, mics: usize, train: TrainConfig) -> Self {
        let excerpt_len = (train.input_duration * pssl_core::signal::CANONICAL_SAMPLE_RATE as f64).round() as usize;
        Self { variant, scale, mask: MetadataMask::full(mics), train, stft: StftConfig::default(), excerpt_len }
    }

    pub fn architecture(&self, sample_shape: [usize; 3]) -> ArchitectureConfig {
        let mut cfg = ArchitectureConfig::new(self.variant, self.scale, self.mask.num_mics(), self.mask.len());
        cfg.input_channels = sample_shape[0];
        cfg.input_frames = sample_shape[1];
        cfg.input_bins = sample_shape[2];
        cfg
    }
}

/// Trains from scratch, or continues `resume` until `spec.train.epochs`.
pub fn train_run(spec: &RunSpec, train_set: &LoadedSet, val_set: &LoadedSet, resume: Option<Checkpoint>) -> Result<Checkpoint> {
    let tr = train_set.masked(&spec.mask)?;
    let va = val_set.masked(&spec.mask)?;
    let mut state = match resume {
        Some(ck) => {
            ensure!(ck.mask == spec.mask, "checkpoint metadata mask differs from the requested one");
            ck.state
        }
        None => TrainState::new(spec.architecture(tr.sample_shape), &spec.train)?,
    };
    let label = format!("{} seed {}", spec.variant.as_str(), spec.train.seed);
    train(&mut state, &tr, &va, &spec.train, |r| {
        log::info!("{label}: epoch {} loss {:.4} val {:.4} m", r.epoch, r.train_loss, r.val_error)
    })?;
    Ok(Checkpoint { state, train: spec.train, mask: spec.mask.clone(), stft: spec.stft, excerpt_len: spec.excerpt_len })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub prediction: [f64; 2],
    pub truth: [f64; 2],
    pub euclidean: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    L1,
}

impl std::str::FromStr for Metric {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "l1" => Ok(Metric::L1),
            _ => bail!("unknown metric {s:?} (expected euclidean or l1)"),
        }
    }
}

impl EvalRow {
    pub fn error(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Euclidean => self.euclidean,
            Metric::L1 => self.l1,
        }
    }
}

/// Per-sample errors of the checkpoint's best-validation model.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, ids: &[String]) -> Result<Vec<EvalRow>> {
    let model = ckpt.state.best_model();
    let cfg = &model.config;
    if cfg.variant.uses_metadata() && cfg.metadata_dim != data.metadata_dim {
        bail!("metadata mask mismatch: checkpoint expects {} values, data has {}", cfg.metadata_dim, data.metadata_dim);
    }
    ensure!(ids.len() == data.len(), "{} ids for {} samples", ids.len(), data.len());
    let preds = predict_dataset(&model, data, 64)?;
    Ok(preds
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let t = data.target(i);
            EvalRow { id: ids[i].clone(), prediction: p, truth: t, euclidean: euclidean_error(p, t), l1: l1_error(p, t) }
        })
        .collect())
}

pub fn summary_of(rows: &[EvalRow], metric: Metric) -> Result<Summary> {
    Ok(summarize(&rows.iter().map(|r| r.error(metric)).collect::<Vec<_>>())?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "x_hat", "y_hat", "x", "y", "euclidean_m", "l1_m"])?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.prediction[0].to_string(),
            r.prediction[1].to_string(),
            r.truth[0].to_string(),
            r.truth[1].to_string(),
            r.euclidean.to_string(),
            r.l1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Errors of one method over its runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: String,
    /// Per-sample Euclidean errors of each run.
    pub runs: Vec<Vec<f64>>,
}

impl MethodResult {
    pub fn run_means(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect()
    }

    /// Mean and standard deviation of the run means.
    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.run_means())
    }

    /// All runs' errors pooled.
    pub fn pooled(&self) -> Vec<f64> {
        self.runs.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub methods: Vec<MethodResult>,
    /// Upper end of the histogram range (m).
    pub diagonal: f64,
}

impl ComparisonReport {
    pub fn get(&self, method: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Method names accepted by [`run_comparison`].
pub const METHODS: [&str; 4] = ["ls", "crnn", "dinn", "dinn-embedding"];

/// Trains each neural method `repeats` times with seeds `seed, seed+1, ...`
/// and runs the deterministic LS baseline once. `trained` receives each
/// checkpoint with its method name.
pub fn run_comparison(
    sets: [&Manifest; 3],
    methods: &[String],
    repeats: usize,
    base: &RunSpec,
    ls: &LsOptions,
    mut trained: impl FnMut(&str, &Checkpoint) -> Result<()>,
) -> Result<ComparisonReport> {
    ensure!(repeats > 0, "repeats must be positive");
    for m in methods {
        ensure!(METHODS.contains(&m.as_str()), "unknown method {m:?}");
    }
    let [train_m, val_m, test_m] = sets;
    let neural = methods.iter().any(|m| m != "ls");
    let loaded = if neural {
        Some((
            LoadedSet::load(train_m, &base.stft, base.excerpt_len)?,
            LoadedSet::load(val_m, &base.stft, base.excerpt_len)?,
            LoadedSet::load(test_m, &base.stft, base.excerpt_len)?,
        ))
    } else {
        None
    };
    let diagonal = test_m.records.iter().map(|r| r.room.dims[0].hypot(r.room.dims[1])).fold(0.0, f64::max);
    let ids: Vec<String> = test_m.records.iter().map(|r| r.id.clone()).collect();
    let mut out = Vec::new();
    for m in methods {
        let runs = if m == "ls" {
            vec![localize_manifest(test_m, ls, None)?.iter().map(|r| r.error).collect()]
        } else {
            let (tr, va, te) = loaded.as_ref().expect("features loaded for neural methods");
            let mut runs = Vec::with_capacity(repeats);
            for k in 0..repeats {
                let mut spec = base.clone();
                spec.variant = m.parse()?;
                spec.train.seed = base.train.seed + k as u64;
                let ck = train_run(&spec, tr, va, None)?;
                trained(m, &ck)?;
                let rows = evaluate(&ck, &te.masked(&spec.mask)?, &ids)?;
                runs.push(rows.iter().map(|r| r.euclidean).collect());
            }
            runs
        };
        out.push(MethodResult { method: m.clone(), runs });
    }
    Ok(ComparisonReport { methods: out, diagonal })
}

pub fn write_comparison_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["method", "runs", "mean_m", "std_m", "median_m", "run_means"])?;
    for m in &report.methods {
        let (mean, std) = m.mean_std();
        let means: Vec<String> = m.run_means().iter().map(f64::to_string).collect();
        w.write_record([
            m.method.clone(),
            m.runs.len().to_string(),
            mean.to_string(),
            std.to_string(),
            pssl_core::stats::median(&m.pooled()).to_string(),
            means.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Normalized histogram and CDF per method, one row per bin.
pub fn write_histogram_csv(path: &Path, series: &[(String, Histogram)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["method", "bin_lo_m", "bin_hi_m", "count", "fraction", "cdf"])?;
    for (name, h) in series {
        let (frac, cdf) = (h.normalized(), h.cdf());
        for k in 0..h.len() {
            let (lo, hi) = h.edges(k);
            w.write_record([
                name.clone(),
                lo.to_string(),
                hi.to_string(),
                h.counts[k].to_string(),
                frac[k].to_string(),
                cdf[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Side-by-side normalized histograms (top) and CDFs (bottom).
pub fn histogram_svg(series: &[(String, Histogram)]) -> Result<String> {
    let bins = series.iter().map(|(_, h)| h.len()).max().unwrap_or(1);
    let width = series.first().map_or(BIN_WIDTH, |(_, h)| h.bin_width);
    let (w, ph, pad) = (640.0, 220.0, 40.0);
    let plot_w = w - 2.0 * pad;
    let peak = series.iter().flat_map(|(_, h)| h.normalized()).fold(0.0, f64::max).max(1e-12);
    let bw = plot_w / bins as f64;
    let sub = bw / series.len().max(1) as f64;
    let mut s = String::new();
    let h_total = 2.0 * ph + 3.0 * pad;
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h_total}" font-family="sans-serif" font-size="11">"#)?;
    writeln!(s, r#"<rect width="{w}" height="{h_total}" fill="white"/>"#)?;
    for (k, (name, h)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (b, f) in h.normalized().iter().enumerate() {
            let bh = f / peak * ph;
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                pad + b as f64 * bw + k as f64 * sub,
                pad + ph - bh,
                sub,
                bh
            )?;
        }
        let top = 2.0 * pad + ph;
        let mut d = format!("M{pad} {:.2}", top + ph);
        for (b, c) in h.cdf().iter().enumerate() {
            write!(d, " L{:.2} {:.2}", pad + (b + 1) as f64 * bw, top + ph - c * ph)?;
        }
        writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#)?;
        writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#, w - pad - 120.0, pad + 14.0 * (k + 1) as f64)?;
    }
    for (y0, label) in [(pad, "fraction"), (2.0 * pad + ph, "cumulative")] {
        writeln!(s, r#"<path d="M{pad} {y0}V{}H{}" fill="none" stroke="black"/>"#, y0 + ph, w - pad)?;
        writeln!(s, r#"<text x="4" y="{}">{label}</text>"#, y0 - 6.0)?;
    }
    writeln!(s, r#"<text x="{}" y="{}">error (m), bins of {width} m</text>"#, w / 2.0 - 60.0, h_total - 8.0)?;
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<stem>.csv` and `<stem>.svg`.
pub fn error_histogram(
    errors: &[(String, Vec<f64>)],
    bin_width: f64,
    upper: f64,
    dir: &Path,
    stem: &str,
) -> Result<Vec<(String, Histogram)>> {
    let series = errors.iter().map(|(name, e)| Ok((name.clone(), Histogram::new(e, bin_width, upper)?))).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir)?;
    write_histogram_csv(&dir.join(format!("{stem}.csv")), &series)?;
    fs::write(dir.join(format!("{stem}.svg")), histogram_svg(&series)?)?;
    Ok(series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub label: String,
    pub mean_error: f64,
    pub increase_pct: f64,
}

/// Mean test error with each perturbation applied to the test metadata,
/// relative to the unperturbed error. The first row is the clean baseline.
pub fn run_sensitivity(ckpt: &Checkpoint, test: &LoadedSet, specs: &[PerturbationSpec]) -> Result<Vec<SensitivityRow>> {
    ensure!(ckpt.state.model.config.variant.uses_metadata(), "sensitivity needs a metadata-aware checkpoint");
    let data = test.masked(&ckpt.mask)?;
    let ids: Vec<String> = (0..data.len()).map(|i| i.to_string()).collect();
    let mean = |d: &Dataset| -> Result<f64> { Ok(summary_of(&evaluate(ckpt, d, &ids)?, Metric::Euclidean)?.mean) };
    let clean = mean(&data)?;
    let mut rows = vec![SensitivityRow { label: "clean".into(), mean_error: clean, increase_pct: 0.0 }];
    let fields: Vec<MetadataField> = ckpt.mask.fields();
    for spec in specs {
        let mut d = data.clone();
        perturb_metadata(&mut d.metadata, &fields, spec)?;
        let e = mean(&d)?;
        rows.push(SensitivityRow { label: spec.label(), mean_error: e, increase_pct: relative_increase(clean, e) });
    }
    Ok(rows)
}

pub fn write_sensitivity_csv(path: &Path, rows: &[SensitivityRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["perturbation", "mean_error_m", "increase_pct"])?;
    for r in rows {
        w.write_record([r.label.clone(), r.mean_error.to_string(), r.increase_pct.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceRow {
    pub mask: RelevanceMask,
    pub mean_error: f64,
    /// `error_full / error_mask × 100`.
    pub percent: f64,
}

/// One DI-NN training per mask. The full mask must come first; it is the
/// reference for every row. `trained` receives each checkpoint.
pub fn run_relevance(
    base: &RunSpec,
    masks: &[RelevanceMask],
    sets: [&LoadedSet; 3],
    mut trained: impl FnMut(RelevanceMask, &Checkpoint) -> Result<()>,
) -> Result<Vec<RelevanceRow>> {
    ensure!(masks.first() == Some(&RelevanceMask::FULL), "the full metadata mask must be the first row");
    let [tr, va, te] = sets;
    let mut errors = Vec::with_capacity(masks.len());
    for &m in masks {
        ensure!(!m.is_empty(), "a relevance row needs at least one metadata group");
        let mut spec = base.clone();
        spec.variant = Variant::Dinn;
        spec.mask = m.metadata_mask(tr.mics);
        let ck = train_run(&spec, tr, va, None).with_context(|| format!("relevance row {}", m.label()))?;
        trained(m, &ck)?;
        let test = te.masked(&spec.mask)?;
        let ids: Vec<String> = (0..test.len()).map(|i| i.to_string()).collect();
        errors.push(summary_of(&evaluate(&ck, &test, &ids)?, Metric::Euclidean)?.mean);
    }
    let full = errors[0];
    Ok(masks.iter().zip(errors).map(|(&mask, e)| RelevanceRow { mask, mean_error: e, percent: relevance_percent(full, e) }).collect())
}

pub fn write_relevance_csv(path: &Path, rows: &[RelevanceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["mic_coords", "room_dims", "rt60", "mean_error_m", "percent"])?;
    for r in rows {
        w.write_record([
            r.mask.mic_coords.to_string(),
            r.mask.room_dims.to_string(),
            r.mask.rt60.to_string(),
            r.mean_error.to_string(),
            r.percent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Distance from each test configuration to the nearest training one.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceReport {
    pub samples: Vec<(String, f64)>,
    pub histogram: Histogram,
    /// Test ids whose configuration also occurs in the training set.
    pub duplicates: Vec<String>,
}

pub fn independence_report(test: &Manifest, train: &Manifest, bin_width: f64) -> Result<IndependenceReport> {
    ensure!(!test.is_empty(), "empty test set");
    ensure!(!train.is_empty(), "empty training set");
    let train_scenes = train.scenes()?;
    let samples =
        test.records.iter().map(|r| Ok((r.id.clone(), min_config_distance(&r.scene()?, &train_scenes)?))).collect::<Result<Vec<_>>>()?;
    let d: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let histogram = Histogram::new(&d, bin_width, 0.0)?;
    let duplicates = samples.iter().filter(|s| s.1 == 0.0).map(|s| s.0.clone()).collect();
    Ok(IndependenceReport { samples, histogram, duplicates })
}

/// Histogram table at `path`; per-sample distances beside it as
/// `<stem>_samples.csv`.
pub fn write_independence(path: &Path, report: &IndependenceReport) -> Result<()> {
    write_histogram_csv(path, &[("D".to_string(), report.histogram.clone())])?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("independence");
    let samples = path.with_file_name(format!("{stem}_samples.csv"));
    let mut w = csv_writer(&samples)?;
    w.write_record(["id", "min_config_distance_m"])?;
    for (id, d) in &report.samples {
        w.write_record([id.clone(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
