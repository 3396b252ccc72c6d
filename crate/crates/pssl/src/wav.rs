use std::path::Path;

use anyhow::{bail, Context, Result};
use hound::{SampleFormat, WavSpec};
use pssl_core::signal::{MonoSignal, MultichannelAudio, CANONICAL_SAMPLE_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

/// Reads a WAV file of any channel count, 16-bit PCM or 32-bit float.
/// The sample rate must equal `expected_rate`; there is no resampling.
pub fn read_wav(path: &Path, expected_rate: u32) -> Result<MultichannelAudio> {
    let mut reader = hound::WavReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        bail!("{}: sample rate {} Hz, expected {} Hz", path.display(), spec.sample_rate, expected_rate);
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        (SampleFormat::Int, 16) => reader.samples::<i16>().map(|s| s.map(|v| v as f64 / 32768.0)).collect::<Result<_, _>>()?,
        (fmt, bits) => bail!("{}: unsupported sample format {fmt:?} with {bits} bits", path.display()),
    };
    let m = spec.channels as usize;
    if m == 0 || !interleaved.len().is_multiple_of(m) {
        bail!("{}: truncated multichannel data", path.display());
    }
    let channels = (0..m)
        .map(|c| MonoSignal::new(interleaved.iter().skip(c).step_by(m).copied().collect(), spec.sample_rate))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MultichannelAudio::new(channels)?)
}

pub fn read_canonical(path: &Path) -> Result<MultichannelAudio> {
    read_wav(path, CANONICAL_SAMPLE_RATE)
}

pub fn write_wav(path: &Path, audio: &MultichannelAudio, format: WavFormat) -> Result<()> {
    let spec = WavSpec {
        channels: audio.num_channels() as u16,
        sample_rate: audio.sample_rate(),
        bits_per_sample: if format == WavFormat::Pcm16 { 16 } else { 32 },
        sample_format: if format == WavFormat::Pcm16 { SampleFormat::Int } else { SampleFormat::Float },
    };
    let mut writer = hound::WavWriter::create(path, spec).with_context(|| format!("creating {}", path.display()))?;
    for t in 0..audio.len() {
        for ch in audio.channels() {
            let v = ch.samples()[t];
            match format {
                WavFormat::Float32 => writer.write_sample(v as f32)?,
                WavFormat::Pcm16 => writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_mono(path: &Path, signal: &MonoSignal, format: WavFormat) -> Result<()> {
    write_wav(path, &MultichannelAudio::new(vec![signal.clone()])?, format)
}
