//! Dual-input localization networks (with metadata, with a metadata
//! embedding, or audio only) and their training loop.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{he_uniform, uniform, Adam, AdamConfig, BatchStats, Graph, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng_from_seed};

pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Audio features concatenated with raw metadata.
    Dinn,
    /// Metadata passed through two dense layers before concatenation.
    DinnEmbedding,
    /// Audio only.
    Crnn,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dinn => "dinn",
            Variant::DinnEmbedding => "dinn-embedding",
            Variant::Crnn => "crnn",
        }
    }

    pub fn uses_metadata(self) -> bool {
        self != Variant::Crnn
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dinn" => Ok(Variant::Dinn),
            "dinn-embedding" => Ok(Variant::DinnEmbedding),
            "crnn" => Ok(Variant::Crnn),
            _ => Err(Error::InvalidArgument(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    Toy,
    Paper,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Toy => "toy",
            Scale::Paper => "paper",
        }
    }

    pub fn conv_kernels(self) -> [usize; 4] {
        match self {
            Scale::Toy => [16, 32, 64, 64],
            Scale::Paper => [64, 128, 256, 512],
        }
    }

    pub fn gru_hidden(self) -> usize {
        match self {
            Scale::Toy => 64,
            Scale::Paper => 256,
        }
    }
}

impl core::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Scale::Toy),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::InvalidArgument(format!("unknown scale {s:?}"))),
        }
    }
}

/// Position of batch normalization relative to the ReLU in each
/// convolutional block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormOrder {
    BeforeRelu,
    AfterRelu,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchitectureConfig {
    pub variant: Variant,
    pub scale: Scale,
    pub conv_kernels: Vec<usize>,
    pub gru_hidden: usize,
    /// Number of metadata values fed to the network; 0 for [`Variant::Crnn`].
    pub metadata_dim: usize,
    /// Input planes, twice the microphone count.
    pub input_channels: usize,
    pub input_frames: usize,
    pub input_bins: usize,
    /// Pooling window (time, frequency) after each convolution.
    pub pools: Vec<(usize, usize)>,
    pub norm_order: NormOrder,
}

impl ArchitectureConfig {
    /// Standard layout for `mics` microphones and 0.5 s of 16 kHz audio
    /// (14 frames of 513 bins).
    pub fn new(variant: Variant, scale: Scale, mics: usize, metadata_dim: usize) -> Self {
        Self {
            variant,
            scale,
            conv_kernels: scale.conv_kernels().to_vec(),
            gru_hidden: scale.gru_hidden(),
            metadata_dim: if variant.uses_metadata() { metadata_dim } else { 0 },
            input_channels: 2 * mics,
            input_frames: 14,
            input_bins: 513,
            pools: default_pools(scale.conv_kernels().len()),
            norm_order: NormOrder::BeforeRelu,
        }
    }

    /// Shapes `[channels, frames, bins]` after each convolutional block.
    pub fn block_shapes(&self) -> Result<Vec<[usize; 3]>> {
        if self.pools.len() != self.conv_kernels.len() {
            return Err(Error::Model(format!("{} pooling windows for {} blocks", self.pools.len(), self.conv_kernels.len())));
        }
        let (mut t, mut f) = (self.input_frames, self.input_bins);
        let mut out = Vec::new();
        for (i, (&k, &(pt, pf))) in self.conv_kernels.iter().zip(&self.pools).enumerate() {
            if t < 2 || f < 2 {
                return Err(Error::Model(format!("block {i} input {t}x{f} is smaller than the 2x2 kernel")));
            }
            t -= 1;
            f -= 1;
            if pt == 0 || pf == 0 || t < pt || f < pf {
                return Err(Error::Model(format!("block {i} cannot pool {t}x{f} with {pt}x{pf}")));
            }
            t /= pt;
            f /= pf;
            out.push([k, t, f]);
        }
        Ok(out)
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.gru_hidden
    }

    /// Width of the first fully connected layer's input and output.
    pub fn fusion_dim(&self) -> usize {
        self.feature_dim() + self.metadata_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Crnn && self.metadata_dim != 0 {
            return Err(Error::Model("the audio-only variant takes no metadata".into()));
        }
        if self.variant.uses_metadata() && self.metadata_dim == 0 {
            return Err(Error::Model(format!("{} needs at least one metadata value", self.variant.as_str())));
        }
        if self.conv_kernels.is_empty() || self.gru_hidden == 0 || self.input_channels == 0 {
            return Err(Error::Model("empty layer configuration".into()));
        }
        self.block_shapes().map(|_| ())
    }
}

/// 2x2 pooling in the first block, frequency-only pooling afterwards so
/// the 14-frame time axis survives four valid 2x2 convolutions.
pub fn default_pools(blocks: usize) -> Vec<(usize, usize)> {
    (0..blocks).map(|i| if i == 0 { (2, 2) } else { (1, 2) }).collect()
}

/// Parameters, batch-norm running statistics and architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ArchitectureConfig,
    pub params: ParamStore<T>,
    pub buffers: ParamStore<T>,
}

fn linear_params<T: Real, R: Rng + ?Sized>(p: &mut ParamStore<T>, name: &str, din: usize, dout: usize, rng: &mut R) -> Result<()> {
    p.insert(format!("{name}.weight"), he_uniform(&[dout, din], din, rng))?;
    p.insert(format!("{name}.bias"), Tensor::zeros(&[dout]))?;
    Ok(())
}

/// Forward pass result.
pub struct Forward<T> {
    pub output: Var,
    pub features: Var,
    pub batch_stats: Vec<BatchStats<T>>,
}

impl<T: Real> Model<T> {
    pub fn build<R: Rng + ?Sized>(config: ArchitectureConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut buffers = ParamStore::new();
        let mut cin = config.input_channels;
        for (i, &k) in config.conv_kernels.iter().enumerate() {
            params.insert(format!("conv{i}.weight"), he_uniform(&[k, cin, 2, 2], cin * 4, rng))?;
            params.insert(format!("conv{i}.bias"), Tensor::zeros(&[k]))?;
            params.insert(format!("bn{i}.gamma"), Tensor::full(&[k], T::one()))?;
            params.insert(format!("bn{i}.beta"), Tensor::zeros(&[k]))?;
            buffers.insert(format!("bn{i}.running_mean"), Tensor::zeros(&[k]))?;
            buffers.insert(format!("bn{i}.running_var"), Tensor::full(&[k], T::one()))?;
            cin = k;
        }
        let h = config.gru_hidden;
        let bound = 1.0 / libm::sqrt(h as f64);
        for dir in ["fwd", "bwd"] {
            params.insert(format!("gru.{dir}.w_ih"), uniform(&[3 * h, cin], bound, rng))?;
            params.insert(format!("gru.{dir}.w_hh"), uniform(&[3 * h, h], bound, rng))?;
            params.insert(format!("gru.{dir}.b_ih"), uniform(&[3 * h], bound, rng))?;
            params.insert(format!("gru.{dir}.b_hh"), uniform(&[3 * h], bound, rng))?;
        }
        let nm = config.metadata_dim;
        if config.variant == Variant::DinnEmbedding {
            linear_params(&mut params, "embed0", nm, 2 * nm, rng)?;
            linear_params(&mut params, "embed1", 2 * nm, nm, rng)?;
        }
        let fusion = config.fusion_dim();
        linear_params(&mut params, "fc0", fusion, fusion, rng)?;
        linear_params(&mut params, "fc1", fusion, 2, rng)?;
        Ok(Self { config, params, buffers })
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.cast(), buffers: self.buffers.cast() }
    }

    /// Adds every parameter to `g` as a differentiable leaf, in store order.
    pub fn param_vars(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params.iter().map(|(_, t)| g.param(t.clone())).collect()
    }

    /// Builds the network on `x: [N, C, frames, bins]` and, for metadata
    /// variants, `phi: [N, metadata_dim]`. `vars` come from
    /// [`Model::param_vars`].
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], x: Var, phi: Option<Var>, training: bool) -> Result<Forward<T>> {
        let cfg = &self.config;
        let p = |name: &str| -> Result<Var> {
            self.params.index_of(name).map(|i| vars[i]).ok_or_else(|| Error::Model(format!("missing parameter {name}")))
        };
        let xs = g.shape(x).to_vec();
        if xs.len() != 4 || xs[1..] != [cfg.input_channels, cfg.input_frames, cfg.input_bins] {
            return Err(Error::ShapeMismatch(format!(
                "input {xs:?}, expected [N, {}, {}, {}]",
                cfg.input_channels, cfg.input_frames, cfg.input_bins
            )));
        }
        let n = xs[0];
        match (cfg.variant.uses_metadata(), phi) {
            (true, None) => return Err(Error::Model("metadata required".into())),
            (false, Some(_)) => return Err(Error::Model("the audio-only variant takes no metadata".into())),
            (true, Some(phi)) if g.shape(phi) != [n, cfg.metadata_dim] => {
                return Err(Error::ShapeMismatch(format!("metadata {:?}, expected [{n}, {}]", g.shape(phi), cfg.metadata_dim)))
            }
            _ => {}
        }

        let mut h = x;
        let mut batch_stats = Vec::new();
        for i in 0..cfg.conv_kernels.len() {
            h = g.conv2d(h, p(&format!("conv{i}.weight"))?, p(&format!("conv{i}.bias"))?)?;
            let (gamma, beta) = (p(&format!("bn{i}.gamma"))?, p(&format!("bn{i}.beta"))?);
            if cfg.norm_order == NormOrder::AfterRelu {
                h = g.relu(h);
            }
            h = if training {
                let (out, stats) = g.batch_norm_train(h, gamma, beta)?;
                batch_stats.push(stats);
                out
            } else {
                let mean = self.buffers.get(&format!("bn{i}.running_mean")).expect("buffer exists");
                let var = self.buffers.get(&format!("bn{i}.running_var")).expect("buffer exists");
                g.batch_norm_eval(h, gamma, beta, mean.data(), var.data())?
            };
            if cfg.norm_order == NormOrder::BeforeRelu {
                h = g.relu(h);
            }
            h = g.avg_pool2d(h, cfg.pools[i].0, cfg.pools[i].1)?;
        }
        h = g.mean_axis(h, 3)?;
        h = g.transpose_last2(h)?;
        let mut gp = [x; 8];
        for (k, dir) in ["fwd", "bwd"].iter().enumerate() {
            for (j, part) in ["w_ih", "w_hh", "b_ih", "b_hh"].iter().enumerate() {
                gp[k * 4 + j] = p(&format!("gru.{dir}.{part}"))?;
            }
        }
        h = g.gru_bidirectional(h, gp)?;
        let features = g.mean_axis(h, 1)?;

        let fused = match (cfg.variant, phi) {
            (Variant::Dinn, Some(phi)) => g.concat(features, phi)?,
            (Variant::DinnEmbedding, Some(phi)) => {
                let e = g.linear(phi, p("embed0.weight")?, p("embed0.bias")?)?;
                let e = g.relu(e);
                let e = g.linear(e, p("embed1.weight")?, p("embed1.bias")?)?;
                let e = g.relu(e);
                g.concat(features, e)?
            }
            _ => features,
        };
        let f = g.linear(fused, p("fc0.weight")?, p("fc0.bias")?)?;
        let f = g.relu(f);
        let output = g.linear(f, p("fc1.weight")?, p("fc1.bias")?)?;
        Ok(Forward { output, features, batch_stats })
    }

    /// Moves running statistics towards the given batch statistics.
    pub fn update_running_stats(&mut self, stats: &[BatchStats<T>]) {
        let m = T::of(BN_MOMENTUM);
        for (i, s) in stats.iter().enumerate() {
            for (name, batch) in [("running_mean", &s.mean), ("running_var", &s.var)] {
                let buf = self.buffers.get_mut(&format!("bn{i}.{name}")).expect("buffer exists");
                for (r, &b) in buf.data_mut().iter_mut().zip(batch) {
                    *r = (T::one() - m) * *r + m * b;
                }
            }
        }
    }

    /// Evaluation-mode predictions for a batch.
    pub fn predict(&self, x: Tensor<T>, phi: Option<Tensor<T>>) -> Result<Vec<[f64; 2]>> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self.params.iter().map(|(_, t)| g.input(t.clone())).collect();
        let xv = g.input(x);
        let pv = phi.map(|p| g.input(p));
        let out = self.forward(&mut g, &vars, xv, pv, false)?.output;
        Ok(g.value(out).data().chunks(2).map(|c| [c[0].as_f64(), c[1].as_f64()]).collect())
    }
}

/// In-memory training samples: features `[N, C, frames, bins]`, metadata
/// `[N, metadata_dim]` and target positions `[N, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_shape: [usize; 3],
    pub metadata_dim: usize,
    pub features: Vec<f32>,
    pub metadata: Vec<f32>,
    pub targets: Vec<f32>,
}

impl Dataset {
    pub fn new(sample_shape: [usize; 3], metadata_dim: usize) -> Self {
        Self { sample_shape, metadata_dim, features: Vec::new(), metadata: Vec::new(), targets: Vec::new() }
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, features: &[f32], metadata: &[f32], target: [f32; 2]) -> Result<()> {
        if features.len() != self.sample_len() || metadata.len() != self.metadata_dim {
            return Err(Error::ShapeMismatch(format!(
                "sample with {} features and {} metadata values, expected {} and {}",
                features.len(),
                metadata.len(),
                self.sample_len(),
                self.metadata_dim
            )));
        }
        self.features.extend_from_slice(features);
        self.metadata.extend_from_slice(metadata);
        self.targets.extend_from_slice(&target);
        Ok(())
    }

    pub fn target(&self, i: usize) -> [f64; 2] {
        [self.targets[2 * i] as f64, self.targets[2 * i + 1] as f64]
    }

    pub fn metadata_of(&self, i: usize) -> &[f32] {
        &self.metadata[i * self.metadata_dim..(i + 1) * self.metadata_dim]
    }

    /// Stacks the given samples into `(x, phi, targets)` tensors.
    pub fn batch<T: Real>(&self, idx: &[usize]) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let sl = self.sample_len();
        let mut x = Vec::with_capacity(idx.len() * sl);
        let mut phi = Vec::with_capacity(idx.len() * self.metadata_dim);
        let mut y = Vec::with_capacity(idx.len() * 2);
        for &i in idx {
            x.extend(self.features[i * sl..(i + 1) * sl].iter().map(|&v| T::of(v as f64)));
            phi.extend(self.metadata_of(i).iter().map(|&v| T::of(v as f64)));
            y.extend(self.targets[2 * i..2 * i + 2].iter().map(|&v| T::of(v as f64)));
        }
        let [c, l, f] = self.sample_shape;
        (
            Tensor::new(vec![idx.len(), c, l, f], x).expect("sizes match"),
            Tensor::new(vec![idx.len(), self.metadata_dim], phi).expect("sizes match"),
            Tensor::new(vec![idx.len(), 2], y).expect("sizes match"),
        )
    }
}

/// Evaluation-mode predictions for every sample, in order.
pub fn predict_dataset(model: &Model<f32>, data: &Dataset, batch_size: usize) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, phi, _) = data.batch::<f32>(chunk);
        let phi = model.config.variant.uses_metadata().then_some(phi);
        out.extend(model.predict(x, phi)?);
    }
    Ok(out)
}

pub fn euclidean_error(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

pub fn l1_error(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Seconds of audio per sample.
    pub input_duration: f64,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self { lr: 5e-4, batch_size: 32, epochs: 40, seed: 0, input_duration: 0.5 }
    }

    pub fn toy() -> Self {
        Self { epochs: 15, ..Self::paper() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches.
    pub train_loss: f64,
    /// Mean Euclidean validation error (m).
    pub val_error: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model<f32>,
    pub adam: Adam<f32>,
    pub epochs_done: usize,
    pub history: Vec<EpochRecord>,
    /// Parameters and buffers of the epoch with the lowest validation error.
    pub best: Option<BestSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub val_error: f64,
    pub params: ParamStore<f32>,
    pub buffers: ParamStore<f32>,
}

impl TrainState {
    pub fn new(config: ArchitectureConfig, train: &TrainConfig) -> Result<Self> {
        let mut rng = rng_from_seed(mix_seed(&[train.seed, 0x696e_6974]));
        let model = Model::build(config, &mut rng)?;
        let adam = Adam::new(AdamConfig { lr: train.lr, ..AdamConfig::default() }, &model.params);
        Ok(Self { model, adam, epochs_done: 0, history: Vec::new(), best: None })
    }

    /// The model with the best validation parameters, or the current one
    /// before any epoch finished.
    pub fn best_model(&self) -> Model<f32> {
        match &self.best {
            Some(b) => Model { config: self.model.config.clone(), params: b.params.clone(), buffers: b.buffers.clone() },
            None => self.model.clone(),
        }
    }
}

/// Order of samples in `epoch`, a function of the seed and epoch only.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(mix_seed(&[seed, 0x7368_7566, epoch as u64])));
    idx
}

/// One optimizer step on the given samples; returns the batch loss.
pub fn train_step(state: &mut TrainState, data: &Dataset, idx: &[usize]) -> Result<f64> {
    let (x, phi, y) = data.batch::<f32>(idx);
    let mut g = Graph::new();
    let vars = state.model.param_vars(&mut g);
    let xv = g.input(x);
    let pv = state.model.config.variant.uses_metadata().then(|| g.input(phi));
    let fw = state.model.forward(&mut g, &vars, xv, pv, true)?;
    let loss = g.l1_loss(fw.output, &y)?;
    let value = g.value(loss).item() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss is {value} after {} optimizer steps (batch of {})",
            state.adam.step,
            idx.len()
        )));
    }
    g.backward(loss)?;
    let grads: Vec<Option<Vec<f32>>> = vars.iter().map(|&v| g.grad(v).map(<[f32]>::to_vec)).collect();
    state.adam.step(&mut state.model.params, &grads)?;
    state.model.update_running_stats(&fw.batch_stats);
    Ok(value)
}

/// Mean Euclidean error of `model` on `data`.
pub fn mean_error(model: &Model<f32>, data: &Dataset) -> Result<f64> {
    let preds = predict_dataset(model, data, 64)?;
    Ok(preds.iter().enumerate().map(|(i, &p)| euclidean_error(p, data.target(i))).sum::<f64>() / data.len() as f64)
}

/// Runs epochs until `cfg.epochs` have completed, calling `on_epoch` after
/// each. Minibatches follow [`epoch_order`]; a trailing batch of one sample
/// is skipped because training-mode batch norm needs two.
pub fn train(
    state: &mut TrainState,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training or validation set"));
    }
    if state.model.config.metadata_dim != if state.model.config.variant.uses_metadata() { train.metadata_dim } else { 0 } {
        return Err(Error::Metadata(format!(
            "model expects {} metadata values, dataset has {}",
            state.model.config.metadata_dim, train.metadata_dim
        )));
    }
    while state.epochs_done < cfg.epochs {
        let epoch = state.epochs_done;
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(2)) {
            if chunk.len() < 2 {
                continue;
            }
            total += train_step(state, train, chunk)?;
            batches += 1;
        }
        let val_error = mean_error(&state.model, val)?;
        let record = EpochRecord { epoch: epoch + 1, train_loss: total / batches.max(1) as f64, val_error };
        if state.best.as_ref().is_none_or(|b| val_error < b.val_error) {
            state.best = Some(BestSnapshot {
                epoch: epoch + 1,
                val_error,
                params: state.model.params.clone(),
                buffers: state.model.buffers.clone(),
            });
        }
        state.history.push(record);
        state.epochs_done += 1;
        on_epoch(&record);
    }
    Ok(())
}

/// Name of the parameter with the largest finite-difference mismatch is
/// reported alongside the error; this helper runs that check on the whole
/// network for one small batch.
pub fn gradient_check(
    model: &Model<f64>,
    x: &Tensor<f64>,
    phi: Option<&Tensor<f64>>,
    target: &Tensor<f64>,
    per_param: usize,
) -> Result<crate::autodiff::FiniteDiffReport> {
    crate::autodiff::finite_diff_check(
        |g, vars| {
            let xv = g.input(x.clone());
            let pv = phi.map(|p| g.input(p.clone()));
            let out = model.forward(g, vars, xv, pv, true)?.output;
            g.l1_loss(out, target)
        },
        &model.params,
        1e-4,
        per_param,
    )
}

pub fn describe(config: &ArchitectureConfig) -> String {
    format!(
        "{} ({}) kernels {:?}, GRU hidden {}, metadata {}",
        config.variant.as_str(),
        config.scale.as_str(),
        config.conv_kernels,
        config.gru_hidden,
        config.metadata_dim
    )
}
