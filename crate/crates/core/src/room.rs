//! Shoebox room simulation with the image source method, scene rendering
//! and Schroeder-integration reverberation time measurement.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft::convolve;
use crate::geometry::{Point2, Point3};
use crate::signal::{add_noise_at_snr, MonoSignal, MultichannelAudio, Snr};

/// Sabine constant `24 ln(10) / c` at 343 m/s.
pub const SABINE_CONSTANT: f64 = 0.1611;
pub const SPEED_OF_SOUND: f64 = 343.0;
pub const ROOM_HEIGHT: f64 = 3.0;
pub const MIC_HEIGHT: f64 = 1.5;
pub const SOURCE_HEIGHT: f64 = 1.5;
/// Length of the windowed-sinc fractional delay filter.
pub const SINC_TAPS: usize = 81;

/// Rectangular room: planar width (x) and length (y), fixed height, and
/// its reverberation time (0 means anechoic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Room {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub rt60: f64,
}

impl Room {
    pub fn new(width: f64, length: f64, height: f64, rt60: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(width) && ok(length) && ok(height)) {
            return Err(Error::InvalidArgument(format!("room dimensions {width} x {length} x {height} must be positive")));
        }
        if !(rt60.is_finite() && rt60 >= 0.0) {
            return Err(Error::InvalidArgument(format!("rt60 {rt60} must be >= 0")));
        }
        Ok(Self { width, length, height, rt60 })
    }

    pub fn volume(&self) -> f64 {
        self.width * self.length * self.height
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * (self.width * self.length + self.width * self.height + self.length * self.height)
    }

    pub fn is_anechoic(&self) -> bool {
        self.rt60 == 0.0
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.x > 0.0 && p.x < self.width && p.y > 0.0 && p.y < self.length && p.z > 0.0 && p.z < self.height
    }

    pub fn contains_planar(&self, p: Point2) -> bool {
        p.x > 0.0 && p.x < self.width && p.y > 0.0 && p.y < self.length
    }

    /// Shortest reverberation time reachable with fully absorbing walls.
    pub fn min_rt60(&self) -> f64 {
        SABINE_CONSTANT * self.volume() / self.surface_area()
    }

    pub fn diagonal(&self) -> f64 {
        libm::hypot(self.width, self.length)
    }
}

/// Ground truth of one sample: room, microphones, source and sensor SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: Room,
    pub mics: Vec<Point2>,
    pub source: Point2,
    pub mic_height: f64,
    pub source_height: f64,
    pub snr_db: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let inside = |p: Point3| {
            if self.room.contains(p) {
                Ok(())
            } else {
                Err(Error::OutsideRoom { x: p.x, y: p.y, z: p.z })
            }
        };
        inside(self.source.with_height(self.source_height))?;
        for m in &self.mics {
            inside(m.with_height(self.mic_height))?;
        }
        Ok(())
    }

    pub fn mic_positions(&self) -> Vec<Point3> {
        self.mics.iter().map(|m| m.with_height(self.mic_height)).collect()
    }

    pub fn source_position(&self) -> Point3 {
        self.source.with_height(self.source_height)
    }
}

/// Uniform wall absorption that yields the room's rt60 under Sabine's
/// formula, `alpha = 0.1611 V / (S rt60)`.
pub fn absorption_from_rt60(room: &Room) -> Result<f64> {
    if room.rt60 <= 0.0 {
        return Err(Error::InvalidArgument("absorption needs a positive rt60".into()));
    }
    let alpha = SABINE_CONSTANT * room.volume() / (room.surface_area() * room.rt60);
    if alpha > 1.0 {
        return Err(Error::Rt60Unachievable { rt60: room.rt60, min_rt60: room.min_rt60() });
    }
    Ok(alpha)
}

/// Default cap on [`max_reflection_order`].
pub const MAX_ORDER_CAP: usize = 30;

/// Per-axis reflection budget reaching the rt60 horizon,
/// `ceil(c rt60 / min(width, length))`, optionally capped.
pub fn max_reflection_order(room: &Room, speed_of_sound: f64, cap: Option<usize>) -> usize {
    if room.is_anechoic() {
        return 0;
    }
    let shortest = room.width.min(room.length);
    let order = libm::ceil(speed_of_sound * room.rt60 / shortest) as usize;
    cap.map_or(order, |c| order.min(c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirConfig {
    /// Maximum number of wall reflections along each axis.
    pub max_order: usize,
    /// Energy absorption coefficient of every surface, in `[0, 1]`.
    pub absorption: f64,
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    /// Images arriving later than this many seconds are dropped.
    pub max_duration: Option<f64>,
    /// Apply the 100 Hz high-pass of the original image method, which
    /// removes the low-frequency build-up of the all-positive image sum.
    pub highpass: bool,
}

impl RirConfig {
    pub fn anechoic(sample_rate: u32) -> Self {
        Self { max_order: 0, absorption: 1.0, speed_of_sound: SPEED_OF_SOUND, sample_rate, max_duration: None, highpass: false }
    }

    /// Configuration reproducing the room's rt60: Sabine absorption,
    /// reflection order from [`max_reflection_order`], and truncation at the
    /// rt60 horizon (plus the direct-path travel time across the room).
    pub fn for_room(room: &Room, sample_rate: u32, speed_of_sound: f64, order_cap: Option<usize>) -> Result<Self> {
        if room.is_anechoic() {
            return Ok(Self { speed_of_sound, ..Self::anechoic(sample_rate) });
        }
        let absorption = absorption_from_rt60(room)?;
        let crossing = libm::sqrt(room.volume() / room.height * 2.0 + room.height * room.height) / speed_of_sound;
        Ok(Self {
            max_order: max_reflection_order(room, speed_of_sound, order_cap),
            absorption,
            speed_of_sound,
            sample_rate,
            max_duration: Some(room.rt60 + crossing),
            highpass: true,
        })
    }
}

const REFLECTION_GRID: usize = 16;

/// Second-order 100 Hz high-pass from Allen & Berkley's image method.
fn allen_berkley_highpass(taps: &mut [f64], fs: f64) {
    let w = 2.0 * core::f64::consts::PI * 100.0 / fs;
    let r1 = -libm::exp(-w);
    let b1 = 2.0 * r1 * libm::cos(w);
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0; 3];
    for v in taps.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomImpulseResponse {
    pub taps: MonoSignal,
    /// Direct-path arrival in (fractional) samples.
    pub direct_path_delay: f64,
}

/// Hann-windowed sinc sampled on a fine grid, linearly interpolated.
struct FractionalDelay {
    table: Vec<f64>,
    half_width: f64,
}

const SINC_OVERSAMPLING: usize = 512;

impl FractionalDelay {
    fn new(taps: usize) -> Self {
        let half_width = (taps as f64 + 1.0) / 2.0;
        let n = (2.0 * half_width) as usize * SINC_OVERSAMPLING + 1;
        let table = (0..n)
            .map(|i| {
                let t = i as f64 / SINC_OVERSAMPLING as f64 - half_width;
                let window = 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t / half_width));
                let sinc = if t == 0.0 {
                    1.0
                } else {
                    let a = core::f64::consts::PI * t;
                    libm::sin(a) / a
                };
                window * sinc
            })
            .collect();
        Self { table, half_width }
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        let pos = (t + self.half_width) * SINC_OVERSAMPLING as f64;
        if pos <= 0.0 {
            return 0.0;
        }
        let i = pos as usize;
        if i + 1 >= self.table.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        if frac == 0.0 {
            self.table[i]
        } else {
            self.table[i] + frac * (self.table[i + 1] - self.table[i])
        }
    }
}

/// Allen & Berkley image source model for one source/microphone pair.
///
/// Every image up to `max_order` reflections per axis contributes a
/// fractional-delay impulse of amplitude `beta^k / (4 pi d)`, where `k` is
/// its reflection count and `beta = sqrt(1 - alpha)` the pressure
/// reflection coefficient.
pub fn simulate_rir(room: &Room, src: Point3, mic: Point3, cfg: &RirConfig) -> Result<RoomImpulseResponse> {
    for p in [src, mic] {
        if !room.contains(p) {
            return Err(Error::OutsideRoom { x: p.x, y: p.y, z: p.z });
        }
    }
    if src.distance(mic) == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    if !(0.0..=1.0).contains(&cfg.absorption) {
        return Err(Error::InvalidArgument(format!("absorption {} outside [0, 1]", cfg.absorption)));
    }
    let fs = cfg.sample_rate as f64;
    let c = cfg.speed_of_sound;
    let beta = libm::sqrt(1.0 - cfg.absorption);
    let half = (SINC_TAPS / 2) as i64;
    let direct_delay = src.distance(mic) / c * fs;
    let max_dist = cfg.max_duration.map(|t| (t * c).max(src.distance(mic)));

    let dims = [room.width, room.length, room.height];
    let s = [src.x, src.y, src.z];
    let m = [mic.x, mic.y, mic.z];
    let n_max = cfg.max_order as i64;
    let lattice_limit = |axis: usize| -> i64 {
        match max_dist {
            Some(d) => n_max.min(libm::ceil(d / (2.0 * dims[axis])) as i64 + 1),
            None => n_max,
        }
    };
    let limits = [lattice_limit(0), lattice_limit(1), lattice_limit(2)];

    // Per-axis offsets and reflection counts for every (parity, lattice index).
    let mut axis_images: [Vec<(f64, i32)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for axis in 0..3 {
        for parity in 0..2i64 {
            for l in -limits[axis]..=limits[axis] {
                let reflections = (l - parity).abs() + l.abs();
                if reflections > n_max {
                    continue;
                }
                let sign = if parity == 0 { 1.0 } else { -1.0 };
                let offset = sign * s[axis] + 2.0 * l as f64 * dims[axis] - m[axis];
                axis_images[axis].push((offset, reflections as i32));
            }
        }
    }

    let max_d2 = max_dist.map(|d| d * d);
    let mut beta_pow = vec![1.0; 3 * cfg.max_order + 1];
    for k in 1..beta_pow.len() {
        beta_pow[k] = beta_pow[k - 1] * beta;
    }
    let direct_amp = 1.0 / (4.0 * core::f64::consts::PI * src.distance(mic));
    // Reflections are accumulated on a 1/REFLECTION_GRID sample grid.
    let mut reflections: Vec<(usize, f64)> = Vec::new();
    for &(ox, kx) in &axis_images[0] {
        for &(oy, ky) in &axis_images[1] {
            let dxy = ox * ox + oy * oy;
            if max_d2.is_some_and(|lim| dxy > lim) {
                continue;
            }
            for &(oz, kz) in &axis_images[2] {
                let order = (kx + ky + kz) as usize;
                if order == 0 {
                    continue;
                }
                let d2 = dxy + oz * oz;
                if max_d2.is_some_and(|lim| d2 > lim) {
                    continue;
                }
                let gain = beta_pow[order];
                if gain == 0.0 {
                    continue;
                }
                let d = libm::sqrt(d2);
                let slot = libm::round(d / c * fs * REFLECTION_GRID as f64) as usize;
                reflections.push((slot, gain / (4.0 * core::f64::consts::PI * d)));
            }
        }
    }

    let last_slot = reflections.iter().map(|&(s, _)| s).max().unwrap_or(0);
    let last_delay = (last_slot as f64 / REFLECTION_GRID as f64).max(direct_delay);
    let len = libm::ceil(last_delay) as usize + half as usize + 1;
    let mut taps = vec![0.0; len];
    let filter = FractionalDelay::new(SINC_TAPS);
    let add_impulse = |taps: &mut [f64], delay: f64, amp: f64| {
        let center = libm::floor(delay) as i64;
        let lo = (center - half).max(0);
        let hi = (center + half + 1).min(len as i64 - 1);
        for k in lo..=hi {
            taps[k as usize] += amp * filter.value(k as f64 - delay);
        }
    };
    add_impulse(&mut taps, direct_delay, direct_amp);
    if !reflections.is_empty() {
        let mut grid = vec![0.0; last_slot + 1];
        for &(slot, amp) in &reflections {
            grid[slot] += amp;
        }
        for (slot, &amp) in grid.iter().enumerate() {
            if amp != 0.0 {
                add_impulse(&mut taps, slot as f64 / REFLECTION_GRID as f64, amp);
            }
        }
    }
    if cfg.highpass {
        allen_berkley_highpass(&mut taps, fs);
    }
    Ok(RoomImpulseResponse { taps: MonoSignal::new(taps, cfg.sample_rate)?, direct_path_delay: direct_delay })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub sample_rate: u32,
    pub speed_of_sound: f64,
    /// Leading output samples discarded so the reverberant field is
    /// established at the start of the excerpt.
    pub warmup: usize,
    /// Standard deviation of a per-microphone gain perturbation, in dB.
    pub gain_jitter_db: f64,
    pub order_cap: Option<usize>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            sample_rate: crate::signal::CANONICAL_SAMPLE_RATE,
            speed_of_sound: SPEED_OF_SOUND,
            warmup: 0,
            gain_jitter_db: 0.0,
            order_cap: Some(MAX_ORDER_CAP),
        }
    }
}

/// Per-microphone impulse responses of a scene, zero-padded to a common
/// length.
pub fn scene_rirs(scene: &Scene, opts: &RenderOptions) -> Result<Vec<RoomImpulseResponse>> {
    scene.validate()?;
    let cfg = RirConfig::for_room(&scene.room, opts.sample_rate, opts.speed_of_sound, opts.order_cap)?;
    let src = scene.source_position();
    let mut rirs = scene.mic_positions().into_iter().map(|mic| simulate_rir(&scene.room, src, mic, &cfg)).collect::<Result<Vec<_>>>()?;
    let len = rirs.iter().map(|r| r.taps.len()).max().unwrap_or(0);
    for r in &mut rirs {
        if r.taps.len() < len {
            let mut taps = r.taps.samples().to_vec();
            taps.resize(len, 0.0);
            r.taps = MonoSignal::new(taps, opts.sample_rate)?;
        }
    }
    Ok(rirs)
}

/// Renders `y_i = (h_i * s) + e_i` for every microphone of the scene.
/// Output has `source.len() - opts.warmup` samples per channel, all
/// channels sharing the source's time origin shifted by `warmup`.
pub fn render_scene<R: Rng + ?Sized>(scene: &Scene, source: &MonoSignal, opts: &RenderOptions, rng: &mut R) -> Result<MultichannelAudio> {
    let rirs = scene_rirs(scene, opts)?;
    render_with_rirs(&rirs, source, Snr::from_db(scene.snr_db), opts, rng)
}

/// [`render_scene`] with precomputed impulse responses.
pub fn render_with_rirs<R: Rng + ?Sized>(
    rirs: &[RoomImpulseResponse],
    source: &MonoSignal,
    snr: Snr,
    opts: &RenderOptions,
    rng: &mut R,
) -> Result<MultichannelAudio> {
    if source.sample_rate() != opts.sample_rate {
        return Err(Error::SampleRateMismatch { expected: opts.sample_rate, got: source.sample_rate() });
    }
    if opts.warmup >= source.len() {
        return Err(Error::InvalidArgument(format!(
            "warmup of {} samples leaves nothing of a {}-sample source",
            opts.warmup,
            source.len()
        )));
    }
    let mut channels = Vec::with_capacity(rirs.len());
    for rir in rirs {
        let full = convolve(source.samples(), rir.taps.samples());
        let gain = if opts.gain_jitter_db > 0.0 {
            let db: f64 = rng.sample::<f64, _>(StandardNormal) * opts.gain_jitter_db;
            libm::pow(10.0, db / 20.0)
        } else {
            1.0
        };
        let samples = full[opts.warmup..source.len()].iter().map(|v| v * gain).collect();
        channels.push(MonoSignal::new(samples, opts.sample_rate)?);
    }
    let clean = MultichannelAudio::new(channels)?;
    add_noise_at_snr(&clean, snr, rng)
}

/// Samples needed before the excerpt so every image reaching the
/// microphones has started contributing.
pub fn render_warmup(scene: &Scene, opts: &RenderOptions) -> Result<usize> {
    let rirs = scene_rirs(scene, opts)?;
    Ok(rirs.first().map_or(0, |r| r.taps.len()))
}

/// Schroeder energy decay curve in dB, normalized to 0 dB at the start.
pub fn energy_decay_curve(taps: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for (i, v) in taps.iter().enumerate().rev() {
        acc += v * v;
        edc[i] = acc;
    }
    let total = acc;
    edc.into_iter().map(|e| if e > 0.0 { 10.0 * libm::log10(e / total) } else { f64::NEG_INFINITY }).collect()
}

/// Minimum span between the -5 dB and -25 dB crossings for a usable fit.
const MIN_FIT_SECONDS: f64 = 0.01;

/// RT60 from the Schroeder decay curve: least-squares line through the
/// -5 to -25 dB segment, extrapolated to 60 dB of decay.
pub fn measure_rt60(rir: &RoomImpulseResponse) -> Result<f64> {
    let taps = rir.taps.samples();
    if taps.iter().all(|&v| v == 0.0) {
        return Err(Error::InsufficientDecay("impulse response is silent".into()));
    }
    let edc = energy_decay_curve(taps);
    let start = edc.iter().position(|&e| e <= -5.0);
    let end = edc.iter().position(|&e| e <= -25.0);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) if e > s => (s, e),
        _ => return Err(Error::InsufficientDecay("decay never spans -5 to -25 dB".into())),
    };
    let fs = rir.taps.sample_rate() as f64;
    if ((end - start) as f64) < MIN_FIT_SECONDS * fs {
        return Err(Error::InsufficientDecay(format!("-5 to -25 dB decay spans only {} samples", end - start)));
    }
    let n = (end - start + 1) as f64;
    let (mut st, mut se, mut stt, mut ste) = (0.0, 0.0, 0.0, 0.0);
    for (i, &e) in edc.iter().enumerate().take(end + 1).skip(start) {
        let t = i as f64 / fs;
        st += t;
        se += e;
        stt += t * t;
        ste += t * e;
    }
    let slope = (n * ste - st * se) / (n * stt - st * st);
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay("non-decaying energy curve".into()));
    }
    Ok(-60.0 / slope)
}
