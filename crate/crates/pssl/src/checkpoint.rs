//! Binary checkpoints: a JSON header, an architecture hash and named
//! little-endian arrays.
//!
//! ```text
//! "PSSLCKPT" | version u32 | header_len u32 | header JSON
//! | SHA-256(architecture JSON)[..8] | array_count u32
//! | { name_len u32 | name | dtype u8 | ndim u32 | dims u64* | payload }*
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pssl_core::autodiff::{Adam, AdamConfig, ParamStore, Tensor};
use pssl_core::dinn::{ArchitectureConfig, BestSnapshot, EpochRecord, Model, NormOrder, TrainConfig, TrainState};
use pssl_core::scene::MetadataMask;
use pssl_core::signal::{StftConfig, Window};

pub const MAGIC: &[u8; 8] = b"PSSLCKPT";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

/// A training state together with everything needed to feed it data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub train: TrainConfig,
    pub mask: MetadataMask,
    pub stft: StftConfig,
    /// Samples of audio per input.
    pub excerpt_len: usize,
}

#[derive(Serialize, Deserialize)]
struct ArchHeader {
    variant: String,
    scale: String,
    conv_kernels: Vec<usize>,
    gru_hidden: usize,
    metadata_dim: usize,
    input_channels: usize,
    input_frames: usize,
    input_bins: usize,
    pools: Vec<(usize, usize)>,
    norm_after_relu: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchHeader,
    lr: f64,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    input_duration: f64,
    mask: Vec<bool>,
    n_dft: usize,
    hop: usize,
    hann: bool,
    excerpt_len: usize,
    adam: (f64, f64, f64, f64, u64),
    epochs_done: usize,
    history: Vec<(usize, f64, f64)>,
    best: Option<(usize, f64)>,
}

impl From<&ArchitectureConfig> for ArchHeader {
    fn from(c: &ArchitectureConfig) -> Self {
        Self {
            variant: c.variant.as_str().into(),
            scale: c.scale.as_str().into(),
            conv_kernels: c.conv_kernels.clone(),
            gru_hidden: c.gru_hidden,
            metadata_dim: c.metadata_dim,
            input_channels: c.input_channels,
            input_frames: c.input_frames,
            input_bins: c.input_bins,
            pools: c.pools.clone(),
            norm_after_relu: c.norm_order == NormOrder::AfterRelu,
        }
    }
}

impl ArchHeader {
    fn config(&self) -> Result<ArchitectureConfig> {
        Ok(ArchitectureConfig {
            variant: self.variant.parse()?,
            scale: self.scale.parse()?,
            conv_kernels: self.conv_kernels.clone(),
            gru_hidden: self.gru_hidden,
            metadata_dim: self.metadata_dim,
            input_channels: self.input_channels,
            input_frames: self.input_frames,
            input_bins: self.input_bins,
            pools: self.pools.clone(),
            norm_order: if self.norm_after_relu { NormOrder::AfterRelu } else { NormOrder::BeforeRelu },
        })
    }
}

/// First eight bytes of the SHA-256 of the architecture's JSON form.
pub fn config_hash(config: &ArchitectureConfig) -> [u8; 8] {
    let json = serde_json::to_vec(&ArchHeader::from(config)).expect("architecture serializes");
    let digest = Sha256::digest(json);
    digest[..8].try_into().expect("digest is 32 bytes")
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn array_f32(&mut self, name: &str, shape: &[usize], data: &[f32]) {
        self.u32(name.len() as u32);
        self.0.extend_from_slice(name.as_bytes());
        self.0.push(DTYPE_F32);
        self.u32(shape.len() as u32);
        for &d in shape {
            self.0.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn store(&mut self, prefix: &str, store: &ParamStore<f32>) -> u32 {
        for (name, t) in store.iter() {
            self.array_f32(&format!("{prefix}/{name}"), t.shape(), t.data());
        }
        store.len() as u32
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(self.pos + n <= self.buf.len(), "checkpoint truncated at byte {}", self.pos);
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn array(&mut self) -> Result<(String, Tensor<f32>)> {
        let n = self.u32()? as usize;
        let name = String::from_utf8(self.take(n)?.to_vec())?;
        let dtype = self.take(1)?[0];
        let ndim = self.u32()? as usize;
        let shape = (0..ndim).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let data = match dtype {
            DTYPE_F32 => self.take(numel * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            DTYPE_F64 => self.take(numel * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32).collect(),
            t => bail!("array {name}: unknown dtype tag {t}"),
        };
        Ok((name, Tensor::new(shape, data)?))
    }
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let s = &ckpt.state;
    let a = &s.adam.config;
    let header = Header {
        arch: ArchHeader::from(&s.model.config),
        lr: ckpt.train.lr,
        batch_size: ckpt.train.batch_size,
        epochs: ckpt.train.epochs,
        seed: ckpt.train.seed,
        input_duration: ckpt.train.input_duration,
        mask: ckpt.mask.flags().to_vec(),
        n_dft: ckpt.stft.n_dft,
        hop: ckpt.stft.hop,
        hann: ckpt.stft.window == Window::Hann,
        excerpt_len: ckpt.excerpt_len,
        adam: (a.lr, a.beta1, a.beta2, a.eps, s.adam.step),
        epochs_done: s.epochs_done,
        history: s.history.iter().map(|r| (r.epoch, r.train_loss, r.val_error)).collect(),
        best: s.best.as_ref().map(|b| (b.epoch, b.val_error)),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(json.len() as u32);
    w.0.extend_from_slice(&json);
    w.0.extend_from_slice(&config_hash(&s.model.config));
    let count_at = w.0.len();
    w.u32(0);
    let mut count = w.store("param", &s.model.params) + w.store("buffer", &s.model.buffers);
    for (i, (name, t)) in s.model.params.iter().enumerate() {
        w.array_f32(&format!("adam.m/{name}"), t.shape(), &s.adam.m[i]);
        w.array_f32(&format!("adam.v/{name}"), t.shape(), &s.adam.v[i]);
        count += 2;
    }
    if let Some(b) = &s.best {
        count += w.store("best.param", &b.params) + w.store("best.buffer", &b.buffers);
    }
    w.0[count_at..count_at + 4].copy_from_slice(&count.to_le_bytes());
    Ok(w.0)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    ensure!(r.take(8)? == MAGIC, "not a checkpoint (bad magic)");
    let version = r.u32()?;
    ensure!(version == VERSION, "unsupported checkpoint version {version}");
    let n = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(n)?).context("checkpoint header")?;
    let config = header.arch.config()?;
    config.validate()?;
    let hash: [u8; 8] = r.take(8)?.try_into()?;
    ensure!(hash == config_hash(&config), "architecture hash mismatch: header and hash disagree");

    let count = r.u32()?;
    let mut stores: [ParamStore<f32>; 4] = Default::default();
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for _ in 0..count {
        let (name, t) = r.array()?;
        let (prefix, rest) = name.split_once('/').with_context(|| format!("array name {name:?}"))?;
        match prefix {
            "param" => drop(stores[0].insert(rest, t)?),
            "buffer" => drop(stores[1].insert(rest, t)?),
            "best.param" => drop(stores[2].insert(rest, t)?),
            "best.buffer" => drop(stores[3].insert(rest, t)?),
            "adam.m" => m.push(t.into_data()),
            "adam.v" => v.push(t.into_data()),
            _ => bail!("unknown array {name:?}"),
        }
    }
    ensure!(r.pos == bytes.len(), "{} trailing bytes after the last array", bytes.len() - r.pos);
    let [params, buffers, best_params, best_buffers] = stores;

    let reference = Model::<f32>::build(config.clone(), &mut pssl_core::rng::rng_from_seed(0))?;
    reference.params.check_layout(&params)?;
    reference.buffers.check_layout(&buffers)?;
    ensure!(m.len() == params.len() && v.len() == params.len(), "optimizer moments do not match the parameters");
    let best = match header.best {
        Some((epoch, val_error)) => {
            reference.params.check_layout(&best_params)?;
            reference.buffers.check_layout(&best_buffers)?;
            Some(BestSnapshot { epoch, val_error, params: best_params, buffers: best_buffers })
        }
        None => None,
    };
    let (lr, beta1, beta2, eps, step) = header.adam;
    let state = TrainState {
        model: Model { config, params, buffers },
        adam: Adam { config: AdamConfig { lr, beta1, beta2, eps }, step, m, v },
        epochs_done: header.epochs_done,
        history: header.history.into_iter().map(|(epoch, train_loss, val_error)| EpochRecord { epoch, train_loss, val_error }).collect(),
        best,
    };
    Ok(Checkpoint {
        state,
        train: TrainConfig {
            lr: header.lr,
            batch_size: header.batch_size,
            epochs: header.epochs,
            seed: header.seed,
            input_duration: header.input_duration,
        },
        mask: MetadataMask::from_flags(header.mask)?,
        stft: StftConfig { n_dft: header.n_dft, hop: header.hop, window: if header.hann { Window::Hann } else { Window::Rectangular } },
        excerpt_len: header.excerpt_len,
    })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode(ckpt)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("loading {}", path.display()))
}
