use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use pssl_core::dinn::{Scale, TrainConfig};
use pssl_core::scene::{MetadataMask, Split};
use pssl_core::study::{PerturbTarget, PerturbationSpec, RelevanceMask};

use crate::checkpoint;
use crate::config::config_args;
use crate::dataset::{generate_dataset, ingest_recorded, DatasetProfile, SourceSignal};
use crate::experiments::{self, LoadedSet, Metric, RunSpec, BIN_WIDTH};
use crate::heatmap::export_heatmap;
use crate::ls::{localize_manifest, localize_record, write_report, LsOptions};
use crate::manifest::{read_manifest, write_manifest, Manifest};

#[derive(Debug, Parser)]
#[command(name = "pssl", version, about = "Sound source localization workbench", args_override_self = true)]
pub struct Cli {
    /// Master seed for generation, training and perturbations.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML file whose [global] and [<subcommand>] tables override flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a dataset or ingest recordings, writing WAVs and manifests.
    Generate(GenerateArgs),
    /// Least-squares localization of every sample in a manifest.
    LocalizeLs(LocalizeArgs),
    /// Error grid of one sample as CSV and SVG.
    Heatmap(HeatmapArgs),
    /// Train a network and write a checkpoint.
    Train(TrainArgs),
    /// Per-sample errors of a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Compare LS and the networks over repeated trainings.
    Compare(CompareArgs),
    /// Error increase under metadata perturbations.
    Sensitivity(SensitivityArgs),
    /// One training per metadata group combination.
    Relevance(RelevanceArgs),
    /// Distance of test microphone layouts to the nearest training layout.
    ValidateIndependence(IndependenceArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// anechoic, reverberant, toy-anechoic, toy-reverberant or recorded.
    #[arg(long)]
    pub profile: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Train, validation and test counts, e.g. 2000,500,500.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    /// WAV folder used as source signals, or the recordings folder for the
    /// recorded profile.
    #[arg(long)]
    pub source_dir: Option<PathBuf>,
    /// Seconds of audio per sample.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LsArgs {
    /// Grid spacing (m).
    #[arg(long, default_value_t = 0.02)]
    pub resolution: f64,
    #[arg(long, default_value_t = pssl_core::room::SPEED_OF_SOUND)]
    pub speed_of_sound: f64,
    /// Integer-lag delays without parabolic refinement.
    #[arg(long)]
    pub integer_lags: bool,
}

impl LsArgs {
    fn options(&self) -> LsOptions {
        LsOptions { resolution: self.resolution, speed_of_sound: self.speed_of_sound, interpolate: !self.integer_lags }
    }
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub heatmap_dir: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub ls: LsArgs,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Sample id; defaults to the first record.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub ls: LsArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// dinn, dinn-embedding or crnn.
    #[arg(long, default_value = "dinn")]
    pub arch: String,
    /// toy or paper.
    #[arg(long, default_value = "toy")]
    pub scale: String,
    /// Defaults to 15 at toy scale and 40 at paper scale.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Seconds of audio per input.
    #[arg(long, default_value_t = 0.5)]
    pub input_duration: f64,
    /// Metadata groups fed to the network: any of mic, dims, rt60.
    #[arg(long, value_delimiter = ',', default_value = "mic,dims,rt60")]
    pub mask: Vec<String>,
}

fn parse_mask(groups: &[String], mics: usize) -> Result<MetadataMask> {
    let mut m = RelevanceMask { mic_coords: false, room_dims: false, rt60: false };
    for g in groups {
        match g.as_str() {
            "mic" => m.mic_coords = true,
            "dims" => m.room_dims = true,
            "rt60" => m.rt60 = true,
            other => bail!("unknown metadata group {other:?} (expected mic, dims or rt60)"),
        }
    }
    ensure!(!m.is_empty(), "the metadata mask selects nothing");
    Ok(m.metadata_mask(mics))
}

impl ModelArgs {
    fn run_spec(&self, seed: u64, mics: usize) -> Result<RunSpec> {
        let scale: Scale = self.scale.parse()?;
        let epochs = self.epochs.unwrap_or(if scale == Scale::Toy { TrainConfig::toy().epochs } else { TrainConfig::paper().epochs });
        ensure!(self.batch_size >= 2, "batch size must be at least 2");
        let train = TrainConfig { lr: self.lr, batch_size: self.batch_size, epochs, seed, input_duration: self.input_duration };
        let mut spec = RunSpec::new(self.arch.parse()?, scale, mics, train);
        spec.mask = parse_mask(&self.mask, mics)?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint up to --epochs.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// euclidean or l1.
    #[arg(long, default_value = "euclidean")]
    pub metric: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `<out stem>_hist.csv/svg` with this bin width (m).
    #[arg(long)]
    pub histogram_bin: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ls,crnn,dinn,dinn-embedding")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 4)]
    pub repeats: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = BIN_WIDTH)]
    pub bin_width: f64,
    /// Keep every trained checkpoint here as `<method>-<seed>.ckpt`
    #[arg(long)]
    pub ckpt_dir: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub ls: LsArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Test manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Microphone coordinate noise levels (m).
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5")]
    pub coord_std: Vec<f64>,
    /// Reverberation time noise levels (s).
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub rt60_std: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct RelevanceArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep each row's checkpoint here as `<mask>.ckpt`.
    #[arg(long)]
    pub ckpt_dir: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct IndependenceArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub bin_width: f64,
}

/// Outcome of a successful command: 0, or 1 when a validation failed.
pub enum Outcome {
    Ok,
    Failed(String),
}

fn mics_of(m: &Manifest) -> Result<usize> {
    m.records.first().map(|r| r.mics.len()).context("manifest has no samples")
}

fn generate(seed: u64, a: &GenerateArgs) -> Result<Outcome> {
    if a.profile == "recorded" {
        let dir = a.source_dir.as_deref().context("--source-dir is required for recorded data")?;
        let mut m = ingest_recorded(dir)?;
        fs::create_dir_all(&a.out)?;
        if fs::canonicalize(dir)? != fs::canonicalize(&a.out)? {
            let abs = fs::canonicalize(dir)?;
            for r in &mut m.records {
                r.audio = abs.join(&r.audio).to_string_lossy().into_owned();
            }
        }
        m.root = a.out.clone();
        write_splits(&m, &a.out)?;
        return Ok(Outcome::Ok);
    }
    let mut profile = DatasetProfile::named(&a.profile, seed)?;
    if let Some(c) = &a.counts {
        ensure!(c.len() == 3, "--counts takes three values: train,val,test");
        profile.counts = [c[0], c[1], c[2]];
    }
    if let Some(d) = a.duration {
        ensure!(d > 0.0, "duration must be positive");
        profile.duration = d;
    }
    if let Some(dir) = &a.source_dir {
        profile.source = SourceSignal::WavFolder(dir.clone());
    }
    let m = generate_dataset(&profile, &a.out)?;
    write_splits(&m, &a.out)?;
    Ok(Outcome::Ok)
}

/// `manifest.jsonl` with every record plus one manifest per split.
fn write_splits(m: &Manifest, dir: &Path) -> Result<()> {
    write_manifest(&dir.join("manifest.jsonl"), &m.records)?;
    for s in Split::ALL {
        write_manifest(&dir.join(format!("{}.jsonl", s.as_str())), &m.split(s).records)?;
    }
    Ok(())
}

fn localize(a: &LocalizeArgs) -> Result<Outcome> {
    let m = read_manifest(&a.manifest)?;
    let rows = localize_manifest(&m, &a.ls.options(), a.heatmap_dir.as_deref())?;
    write_report(&a.report, &rows)?;
    let mean = rows.iter().map(|r| r.error).sum::<f64>() / rows.len().max(1) as f64;
    log::info!("{} samples, mean LS error {mean:.4} m", rows.len());
    Ok(Outcome::Ok)
}

fn heatmap(a: &HeatmapArgs) -> Result<Outcome> {
    let m = read_manifest(&a.manifest)?;
    let r = match &a.id {
        Some(id) => m.records.iter().find(|r| &r.id == id).with_context(|| format!("no sample {id:?}"))?,
        None => m.records.first().context("manifest has no samples")?,
    };
    let (grid, row) = localize_record(&m, r, &a.ls.options())?;
    export_heatmap(&grid, &a.out_dir, &r.id, Some(row.truth))?;
    log::info!("{}: estimate ({:.3}, {:.3}), error {:.4} m", r.id, row.estimate.position.x, row.estimate.position.y, row.error);
    Ok(Outcome::Ok)
}

fn train(seed: u64, a: &TrainArgs) -> Result<Outcome> {
    let tr_m = read_manifest(&a.train)?;
    let va_m = read_manifest(&a.val)?;
    let spec = a.model.run_spec(seed, mics_of(&tr_m)?)?;
    let tr = LoadedSet::load(&tr_m, &spec.stft, spec.excerpt_len)?;
    let va = LoadedSet::load(&va_m, &spec.stft, spec.excerpt_len)?;
    let resume = a.resume.as_deref().map(checkpoint::load).transpose()?;
    let ck = experiments::train_run(&spec, &tr, &va, resume)?;
    checkpoint::save(&a.out, &ck)?;
    if let Some(b) = &ck.state.best {
        log::info!("best validation error {:.4} m at epoch {}", b.val_error, b.epoch);
    }
    Ok(Outcome::Ok)
}

fn eval(a: &EvalArgs) -> Result<Outcome> {
    let metric: Metric = a.metric.parse()?;
    let ck = checkpoint::load(&a.ckpt)?;
    let m = read_manifest(&a.manifest)?;
    let set = LoadedSet::load(&m, &ck.stft, ck.excerpt_len)?;
    let ids: Vec<String> = m.records.iter().map(|r| r.id.clone()).collect();
    let rows = experiments::evaluate(&ck, &set.masked(&ck.mask)?, &ids)?;
    experiments::write_eval_csv(&a.out, &rows)?;
    let s = experiments::summary_of(&rows, metric)?;
    log::info!("{} samples: mean {:.4} m, median {:.4} m, std {:.4} m", s.count, s.mean, s.median, s.std);
    if let Some(bin) = a.histogram_bin {
        let stem = format!("{}_hist", a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("eval"));
        let dir = a.out.parent().unwrap_or(Path::new("."));
        let errors = rows.iter().map(|r| r.error(metric)).collect();
        let name = ck.state.model.config.variant.as_str().to_string();
        experiments::error_histogram(&[(name, errors)], bin, set.max_diagonal, dir, &stem)?;
    }
    Ok(Outcome::Ok)
}

fn compare(seed: u64, a: &CompareArgs) -> Result<Outcome> {
    let sets = [read_manifest(&a.train)?, read_manifest(&a.val)?, read_manifest(&a.test)?];
    let spec = a.model.run_spec(seed, mics_of(&sets[0])?)?;
    fs::create_dir_all(&a.out_dir)?;
    if let Some(d) = &a.ckpt_dir {
        fs::create_dir_all(d)?;
    }
    let report =
        experiments::run_comparison([&sets[0], &sets[1], &sets[2]], &a.methods, a.repeats, &spec, &a.ls.options(), |m, ck| {
            match &a.ckpt_dir {
                Some(d) => checkpoint::save(&d.join(format!("{m}-{}.ckpt", ck.train.seed)), ck),
                None => Ok(()),
            }
        })?;
    experiments::write_comparison_csv(&a.out_dir.join("comparison.csv"), &report)?;
    let pooled: Vec<(String, Vec<f64>)> = report.methods.iter().map(|m| (m.method.clone(), m.pooled())).collect();
    experiments::error_histogram(&pooled, a.bin_width, report.diagonal, &a.out_dir, "histogram")?;
    for m in &report.methods {
        let (mean, std) = m.mean_std();
        log::info!("{}: {mean:.4} ± {std:.4} m over {} runs", m.method, m.runs.len());
    }
    Ok(Outcome::Ok)
}

fn sensitivity(seed: u64, a: &SensitivityArgs) -> Result<Outcome> {
    let ck = checkpoint::load(&a.ckpt)?;
    let m = read_manifest(&a.manifest)?;
    let set = LoadedSet::load(&m, &ck.stft, ck.excerpt_len)?;
    let mut specs = Vec::new();
    for &s in &a.coord_std {
        specs.push(PerturbationSpec::new(PerturbTarget::MicCoords, s, seed)?);
    }
    for &s in &a.rt60_std {
        specs.push(PerturbationSpec::new(PerturbTarget::Rt60, s, seed)?);
    }
    let rows = experiments::run_sensitivity(&ck, &set, &specs)?;
    experiments::write_sensitivity_csv(&a.out, &rows)?;
    for r in &rows {
        log::info!("{}: {:.4} m ({:+.2}%)", r.label, r.mean_error, r.increase_pct);
    }
    Ok(Outcome::Ok)
}

fn relevance(seed: u64, a: &RelevanceArgs) -> Result<Outcome> {
    let ms = [read_manifest(&a.train)?, read_manifest(&a.val)?, read_manifest(&a.test)?];
    let spec = a.model.run_spec(seed, mics_of(&ms[0])?)?;
    let sets = ms.iter().map(|m| LoadedSet::load(m, &spec.stft, spec.excerpt_len)).collect::<Result<Vec<_>>>()?;
    if let Some(d) = &a.ckpt_dir {
        fs::create_dir_all(d)?;
    }
    let rows = experiments::run_relevance(&spec, &RelevanceMask::table(), [&sets[0], &sets[1], &sets[2]], |mask, ck| match &a.ckpt_dir {
        Some(d) => checkpoint::save(&d.join(format!("{}.ckpt", mask.label())), ck),
        None => Ok(()),
    })?;
    experiments::write_relevance_csv(&a.out, &rows)?;
    for r in &rows {
        log::info!("{}: {:.4} m, {:.1}%", r.mask.label(), r.mean_error, r.percent);
    }
    Ok(Outcome::Ok)
}

fn independence(a: &IndependenceArgs) -> Result<Outcome> {
    let report = experiments::independence_report(&read_manifest(&a.test)?, &read_manifest(&a.train)?, a.bin_width)?;
    experiments::write_independence(&a.out, &report)?;
    let d: Vec<f64> = report.samples.iter().map(|s| s.1).collect();
    log::info!(
        "{} test samples, mean D {:.4} m, min D {:.4} m",
        d.len(),
        d.iter().sum::<f64>() / d.len() as f64,
        d.iter().copied().fold(f64::INFINITY, f64::min)
    );
    if report.duplicates.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Failed(format!(
            "{} test samples repeat a training configuration: {}",
            report.duplicates.len(),
            report.duplicates.join(", ")
        )))
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match &cli.command {
        Command::Generate(a) => generate(seed, a),
        Command::LocalizeLs(a) => localize(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Train(a) => train(seed, a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(seed, a),
        Command::Sensitivity(a) => sensitivity(seed, a),
        Command::Relevance(a) => relevance(seed, a),
        Command::ValidateIndependence(a) => independence(a),
    }
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Generate(_) => "generate",
        Command::LocalizeLs(_) => "localize-ls",
        Command::Heatmap(_) => "heatmap",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Compare(_) => "compare",
        Command::Sensitivity(_) => "sensitivity",
        Command::Relevance(_) => "relevance",
        Command::ValidateIndependence(_) => "validate-independence",
    }
}

/// Parses flags, applies the config file and runs the command.
/// Exit codes: 0 success, 1 failure, 2 usage error.
pub fn run(argv: Vec<OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match &cli.config {
        Some(path) => {
            let extra = match config_args(path, subcommand_name(&cli.command)) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            match Cli::try_parse_from(argv.into_iter().chain(extra.into_iter().map(OsString::from))) {
                Ok(c) => c,
                Err(e) => {
                    let _ = e.print();
                    return ExitCode::from(2);
                }
            }
        }
        None => cli,
    };
    match execute(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(msg)) => {
            log::error!("{msg}");
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
