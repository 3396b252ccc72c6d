//! Time-frequency primitives: audio containers, STFT, noise and SNR mixing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft::Fft;

/// Canonical sampling rate of every dataset in the workbench.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// A single channel of real samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MonoSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl MonoSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("signal sample {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            libm::sqrt(self.energy() / self.samples.len() as f64)
        }
    }

    /// Copy of `len` samples starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.samples.len() {
            return Err(Error::InvalidArgument(format!("slice {start}..{} beyond signal length {}", start + len, self.samples.len())));
        }
        Ok(Self { samples: self.samples[start..start + len].to_vec(), sample_rate: self.sample_rate })
    }
}

/// `M` equally long channels sharing one sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelAudio {
    channels: Vec<MonoSignal>,
}

impl MultichannelAudio {
    pub fn new(channels: Vec<MonoSignal>) -> Result<Self> {
        let first = channels.first().ok_or(Error::Empty("channel list"))?;
        let (len, rate) = (first.len(), first.sample_rate());
        for (i, ch) in channels.iter().enumerate() {
            if ch.sample_rate() != rate {
                return Err(Error::SampleRateMismatch { expected: rate, got: ch.sample_rate() });
            }
            if ch.len() != len {
                return Err(Error::ShapeMismatch(format!("channel {i} has {} samples, channel 0 has {len}", ch.len())));
            }
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[MonoSignal] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<MonoSignal> {
        self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.channels[0].sample_rate()
    }
}

/// Analysis window applied to every STFT frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Periodic Hann window.
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * libm::cos(2.0 * core::f64::consts::PI * i as f64 / n as f64)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub n_dft: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { n_dft: 1024, hop: 512, window: Window::Hann }
    }
}

impl StftConfig {
    /// Number of frames for a signal of `len` samples (no edge padding).
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.n_dft {
            0
        } else {
            1 + (len - self.n_dft) / self.hop
        }
    }

    pub fn num_bins(&self) -> usize {
        self.n_dft / 2 + 1
    }
}

/// One-sided complex STFT, stored frame-major (`frames x bins`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Vec<Complex64>,
    frames: usize,
    num_bins: usize,
    n_dft: usize,
    hop: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn from_bins(bins: Vec<Complex64>, frames: usize, n_dft: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        let num_bins = n_dft / 2 + 1;
        if bins.len() != frames * num_bins {
            return Err(Error::ShapeMismatch(format!("{} bins for {frames} frames of {num_bins}", bins.len())));
        }
        Ok(Self { bins, frames, num_bins, n_dft, hop, sample_rate })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn n_dft(&self) -> usize {
        self.n_dft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.bins[frame * self.num_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.bins[frame * self.num_bins..(frame + 1) * self.num_bins]
    }

    /// Energy of one frame recovered from its one-sided spectrum,
    /// `(|X_0|^2 + 2 sum |X_k|^2 + |X_{N/2}|^2) / N`.
    pub fn frame_energy(&self, frame: usize) -> f64 {
        let row = self.frame(frame);
        let last = self.num_bins - 1;
        let sum: f64 = row
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = if k == 0 || (k == last && self.n_dft.is_multiple_of(2)) { 1.0 } else { 2.0 };
                w * c.norm_sqr()
            })
            .sum();
        sum / self.n_dft as f64
    }
}

/// Short-time Fourier transform without edge padding:
/// `L = 1 + floor((T - n_dft) / hop)` frames of `n_dft / 2 + 1` bins.
pub fn stft(signal: &MonoSignal, config: &StftConfig) -> Result<Spectrogram> {
    if config.hop == 0 {
        return Err(Error::InvalidArgument("hop must be positive".into()));
    }
    if signal.len() < config.n_dft {
        return Err(Error::SignalTooShort { len: signal.len(), n_dft: config.n_dft });
    }
    let fft = Fft::new(config.n_dft)?;
    let window = config.window.coefficients(config.n_dft);
    let frames = config.num_frames(signal.len());
    let num_bins = config.num_bins();
    let mut bins = Vec::with_capacity(frames * num_bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); config.n_dft];
    let x = signal.samples();
    for l in 0..frames {
        let start = l * config.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(x[start + i] * window[i], 0.0);
        }
        fft.forward(&mut buf);
        bins.extend_from_slice(&buf[..num_bins]);
    }
    Spectrogram::from_bins(bins, frames, config.n_dft, config.hop, signal.sample_rate())
}

/// Real and imaginary parts of `M` spectrograms as `2M` channels of
/// shape `[C, L, F]`, real parts first.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImagTensor {
    values: Vec<f64>,
    channels: usize,
    frames: usize,
    bins: usize,
}

impl RealImagTensor {
    pub fn new(values: Vec<f64>, channels: usize, frames: usize, bins: usize) -> Result<Self> {
        if !channels.is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!("{channels} channels is odd")));
        }
        if values.len() != channels * frames * bins {
            return Err(Error::ShapeMismatch(format!("{} values for shape [{channels}, {frames}, {bins}]", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("real/imag tensor".into()));
        }
        Ok(Self { values, channels, frames, bins })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.frames, self.bins]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Rebuilds the complex grids channel by channel.
    pub fn to_complex(&self) -> Vec<Vec<Complex64>> {
        let m = self.channels / 2;
        let plane = self.frames * self.bins;
        (0..m)
            .map(|c| {
                let re = &self.values[c * plane..(c + 1) * plane];
                let im = &self.values[(m + c) * plane..(m + c + 1) * plane];
                re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
            })
            .collect()
    }
}

pub fn stack_real_imag(specs: &[Spectrogram]) -> Result<RealImagTensor> {
    let first = specs.first().ok_or(Error::Empty("spectrogram list"))?;
    let (frames, bins) = (first.frames(), first.num_bins());
    for (i, s) in specs.iter().enumerate() {
        if s.frames() != frames || s.num_bins() != bins {
            return Err(Error::ShapeMismatch(format!("spectrogram {i} is {}x{}, expected {frames}x{bins}", s.frames(), s.num_bins())));
        }
    }
    let m = specs.len();
    let plane = frames * bins;
    let mut values = vec![0.0; 2 * m * plane];
    for (c, s) in specs.iter().enumerate() {
        for (k, z) in s.bins().iter().enumerate() {
            values[c * plane + k] = z.re;
            values[(m + c) * plane + k] = z.im;
        }
    }
    RealImagTensor::new(values, 2 * m, frames, bins)
}

/// STFT of every channel followed by [`stack_real_imag`].
pub fn multichannel_features(audio: &MultichannelAudio, config: &StftConfig) -> Result<RealImagTensor> {
    let specs = audio.channels().iter().map(|ch| stft(ch, config)).collect::<Result<Vec<_>>>()?;
    stack_real_imag(&specs)
}

/// I.i.d. zero-mean, unit-variance Gaussian samples.
pub fn white_noise<R: Rng + ?Sized>(len: usize, sample_rate: u32, rng: &mut R) -> Result<MonoSignal> {
    if len == 0 {
        return Err(Error::InvalidArgument("noise length must be positive".into()));
    }
    let samples = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    MonoSignal::new(samples, sample_rate)
}

/// White noise under a slowly varying, intermittent amplitude envelope.
/// Stands in for speech when no recordings are available: bursts at a
/// random syllable rate between 2 and 6 Hz separated by near-silent gaps.
pub fn modulated_noise<R: Rng + ?Sized>(len: usize, sample_rate: u32, rng: &mut R) -> Result<MonoSignal> {
    let carrier = white_noise(len, sample_rate, rng)?;
    let rate = rng.random_range(2.0..6.0);
    let phase = rng.random_range(0.0..core::f64::consts::TAU);
    let fs = sample_rate as f64;
    let samples = carrier
        .samples()
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            let s = libm::sin(core::f64::consts::TAU * rate * t as f64 / fs + phase);
            let env = if s > 0.0 { s * s } else { 0.0 };
            v * (0.05 + env)
        })
        .collect();
    MonoSignal::new(samples, sample_rate)
}

/// Signal-to-noise ratio of additive sensor noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    /// No noise is added.
    Noiseless,
}

impl Snr {
    /// `f64::INFINITY` maps to [`Snr::Noiseless`].
    pub fn from_db(db: f64) -> Self {
        if db == f64::INFINITY {
            Snr::Noiseless
        } else {
            Snr::Db(db)
        }
    }
}

/// Adds independent white Gaussian noise to every channel, scaled so that
/// the realized per-channel energy ratio equals the requested SNR.
pub fn add_noise_at_snr<R: Rng + ?Sized>(clean: &MultichannelAudio, snr: Snr, rng: &mut R) -> Result<MultichannelAudio> {
    let snr_db = match snr {
        Snr::Noiseless => return Ok(clean.clone()),
        Snr::Db(db) if db.is_nan() || db == f64::NEG_INFINITY => return Err(Error::InvalidArgument(format!("SNR of {db} dB"))),
        Snr::Db(db) if db == f64::INFINITY => return Ok(clean.clone()),
        Snr::Db(db) => db,
    };
    let mut out = Vec::with_capacity(clean.num_channels());
    for (i, ch) in clean.channels().iter().enumerate() {
        let signal_energy = ch.energy();
        if signal_energy <= 0.0 {
            return Err(Error::ZeroEnergy(i));
        }
        let noise = white_noise(ch.len(), ch.sample_rate(), rng)?;
        let noise_energy = noise.energy();
        let target = signal_energy / libm::pow(10.0, snr_db / 10.0);
        let gain = libm::sqrt(target / noise_energy);
        let samples = ch.samples().iter().zip(noise.samples()).map(|(s, n)| s + gain * n).collect();
        out.push(MonoSignal::new(samples, ch.sample_rate())?);
    }
    MultichannelAudio::new(out)
}

/// `10 log10(E_signal / E_noise)` where the noise is `noisy - clean`.
pub fn measured_snr_db(clean: &MonoSignal, noisy: &MonoSignal) -> f64 {
    let noise: f64 = clean.samples().iter().zip(noisy.samples()).map(|(c, n)| (n - c) * (n - c)).sum();
    10.0 * libm::log10(clean.energy() / noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn sig(samples: Vec<f64>) -> MonoSignal {
        MonoSignal::new(samples, CANONICAL_SAMPLE_RATE).unwrap()
    }

    #[test]
    fn half_second_frame_count() {
        let s = MonoSignal::zeros(8000, 16_000).unwrap();
        let spec = stft(&s, &StftConfig::default()).unwrap();
        assert_eq!(spec.frames(), 14);
        assert_eq!(spec.num_bins(), 513);
    }

    #[test]
    fn zero_signal_zero_spectrum() {
        let spec = stft(&MonoSignal::zeros(4096, 16_000).unwrap(), &StftConfig::default()).unwrap();
        assert!(spec.bins().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn cosine_peaks_at_its_bin() {
        let n_dft = 256;
        let k = 19;
        let x: Vec<f64> = (0..2048).map(|t| libm::cos(2.0 * core::f64::consts::PI * (k * t) as f64 / n_dft as f64)).collect();
        let cfg = StftConfig { n_dft, hop: 128, window: Window::Rectangular };
        let spec = stft(&sig(x), &cfg).unwrap();
        for l in 0..spec.frames() {
            let (arg, _) =
                spec.frame(l).iter().enumerate().fold((0, -1.0), |best, (b, z)| if z.norm() > best.1 { (b, z.norm()) } else { best });
            assert_eq!(arg, k);
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        let err = stft(&MonoSignal::zeros(1000, 16_000).unwrap(), &StftConfig::default()).unwrap_err();
        assert_eq!(err, Error::SignalTooShort { len: 1000, n_dft: 1024 });
    }

    #[test]
    fn non_finite_samples_rejected() {
        assert!(MonoSignal::new(vec![0.0, f64::NAN], 16_000).is_err());
        assert!(MonoSignal::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn parseval_on_rectangular_frames() {
        let mut rng = rng_from_seed(3);
        let x = white_noise(1024, 16_000, &mut rng).unwrap();
        let cfg = StftConfig { n_dft: 256, hop: 256, window: Window::Rectangular };
        let spec = stft(&x, &cfg).unwrap();
        for l in 0..spec.frames() {
            let t: f64 = x.samples()[l * 256..(l + 1) * 256].iter().map(|v| v * v).sum();
            assert!((spec.frame_energy(l) - t).abs() <= 1e-6 * t);
        }
    }

    #[test]
    fn stack_four_channels() {
        let mut rng = rng_from_seed(9);
        let cfg = StftConfig::default();
        let specs: Vec<_> = (0..4).map(|_| stft(&white_noise(8000, 16_000, &mut rng).unwrap(), &cfg).unwrap()).collect();
        let t = stack_real_imag(&specs).unwrap();
        assert_eq!(t.shape(), [8, 14, 513]);
        let back = t.to_complex();
        for (c, s) in specs.iter().enumerate() {
            assert_eq!(back[c].as_slice(), s.bins());
        }
    }

    #[test]
    fn real_spectrogram_has_zero_imag_channels() {
        let bins: Vec<Complex64> = (0..3 * 5).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let s = Spectrogram::from_bins(bins, 3, 8, 4, 16_000).unwrap();
        let t = stack_real_imag(&[s.clone(), s]).unwrap();
        assert!(t.values()[2 * 15..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stack_rejects_shape_mismatch() {
        let a = Spectrogram::from_bins(vec![Complex64::new(0.0, 0.0); 5], 1, 8, 4, 16_000).unwrap();
        let b = Spectrogram::from_bins(vec![Complex64::new(0.0, 0.0); 10], 2, 8, 4, 16_000).unwrap();
        assert!(matches!(stack_real_imag(&[a, b]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn white_noise_is_deterministic_and_rejects_empty() {
        let a = white_noise(100, 16_000, &mut rng_from_seed(5)).unwrap();
        let b = white_noise(100, 16_000, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
        assert!(white_noise(0, 16_000, &mut rng_from_seed(5)).is_err());
    }

    #[test]
    fn white_noise_moments() {
        let x = white_noise(1_000_000, 16_000, &mut rng_from_seed(11)).unwrap();
        let n = x.len() as f64;
        let mean = x.samples().iter().sum::<f64>() / n;
        let var = x.samples().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() <= 0.01, "mean {mean}");
        assert!((0.98..=1.02).contains(&var), "var {var}");
    }

    fn two_channel(seed: u64) -> MultichannelAudio {
        let mut rng = rng_from_seed(seed);
        MultichannelAudio::new(vec![white_noise(4000, 16_000, &mut rng).unwrap(), modulated_noise(4000, 16_000, &mut rng).unwrap()])
            .unwrap()
    }

    #[test]
    fn snr_is_realized_per_channel() {
        let clean = two_channel(1);
        for snr in [30.0, 0.0, -5.0] {
            let noisy = add_noise_at_snr(&clean, Snr::Db(snr), &mut rng_from_seed(2)).unwrap();
            for (c, n) in clean.channels().iter().zip(noisy.channels()) {
                assert!((measured_snr_db(c, n) - snr).abs() <= 0.1);
            }
        }
    }

    #[test]
    fn zero_db_noise_energy_equals_signal_energy() {
        let clean = two_channel(4);
        let noisy = add_noise_at_snr(&clean, Snr::Db(0.0), &mut rng_from_seed(5)).unwrap();
        for (c, n) in clean.channels().iter().zip(noisy.channels()) {
            let ne: f64 = c.samples().iter().zip(n.samples()).map(|(a, b)| (b - a) * (b - a)).sum();
            assert!((ne / c.energy() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn noiseless_mode_is_identity() {
        let clean = two_channel(6);
        let out = add_noise_at_snr(&clean, Snr::from_db(f64::INFINITY), &mut rng_from_seed(0)).unwrap();
        assert_eq!(out, clean);
    }

    #[test]
    fn zero_energy_channel_is_an_error() {
        let audio =
            MultichannelAudio::new(vec![MonoSignal::zeros(10, 16_000).unwrap(), MonoSignal::new(vec![1.0; 10], 16_000).unwrap()]).unwrap();
        assert_eq!(add_noise_at_snr(&audio, Snr::Db(30.0), &mut rng_from_seed(0)), Err(Error::ZeroEnergy(0)));
    }

    #[test]
    fn channels_must_agree() {
        let a = MonoSignal::zeros(10, 16_000).unwrap();
        assert!(MultichannelAudio::new(vec![a.clone(), MonoSignal::zeros(11, 16_000).unwrap()]).is_err());
        assert!(MultichannelAudio::new(vec![a, MonoSignal::zeros(10, 8_000).unwrap()]).is_err());
        assert!(MultichannelAudio::new(vec![]).is_err());
    }
}
