use proptest::prelude::*;
use pssl_core::dinn::{euclidean_error, l1_error};
use pssl_core::geometry::{Point2, Point3};
use pssl_core::rng::rng_from_seed;
use pssl_core::room::{simulate_rir, RirConfig, Room, SPEED_OF_SOUND};
use pssl_core::scene::{config_distance, sample_anechoic_scene, sample_reverberant_scene};
use pssl_core::signal::{stack_real_imag, stft, white_noise, MonoSignal, StftConfig, Window};
use pssl_core::stats::{ks_critical_1pct, ks_uniform, Histogram};
use pssl_core::tdoa::{error_grid_on, estimate_source, gcc_phat, ErrorGrid, GridSpec, TdoaSet};
use rand::Rng;

fn noise(len: usize, seed: u64) -> MonoSignal {
    white_noise(len, 16_000, &mut rng_from_seed(seed)).unwrap()
}

fn scaled(x: &MonoSignal, a: f64) -> MonoSignal {
    MonoSignal::new(x.samples().iter().map(|v| a * v).collect(), x.sample_rate()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_is_linear(sx in any::<u64>(), sy in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, hop in 64usize..=256) {
        let (x, y) = (noise(1500, sx), noise(1500, sy));
        let cfg = StftConfig { n_dft: 256, hop, window: Window::Hann };
        let mix = MonoSignal::new(x.samples().iter().zip(y.samples()).map(|(p, q)| a * p + b * q).collect(), 16_000).unwrap();
        let (sx, sy, sm) = (stft(&x, &cfg).unwrap(), stft(&y, &cfg).unwrap(), stft(&mix, &cfg).unwrap());
        let scale = sm.bins().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for ((p, q), m) in sx.bins().iter().zip(sy.bins()).zip(sm.bins()) {
            prop_assert!((p * a + q * b - m).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn rectangular_frames_keep_their_energy(seed in any::<u64>(), n_dft in prop::sample::select(vec![64usize, 128, 256, 512])) {
        let x = noise(4 * n_dft, seed);
        let cfg = StftConfig { n_dft, hop: n_dft, window: Window::Rectangular };
        let spec = stft(&x, &cfg).unwrap();
        prop_assert_eq!(spec.frames(), 4);
        for l in 0..4 {
            let t: f64 = x.samples()[l * n_dft..(l + 1) * n_dft].iter().map(|v| v * v).sum();
            prop_assert!((spec.frame_energy(l) - t).abs() <= 1e-6 * t);
        }
    }

    #[test]
    fn real_imag_stacking_round_trips(seed in any::<u64>(), mics in 1usize..5) {
        let cfg = StftConfig { n_dft: 128, hop: 64, window: Window::Hann };
        let specs: Vec<_> = (0..mics).map(|c| stft(&noise(700, seed ^ c as u64), &cfg).unwrap()).collect();
        let t = stack_real_imag(&specs).unwrap();
        prop_assert_eq!(t.shape(), [2 * mics, 9, 65]);
        for (c, s) in t.to_complex().iter().zip(&specs) {
            prop_assert_eq!(c.as_slice(), s.bins());
        }
    }

    #[test]
    fn phat_ignores_input_scale(seed in any::<u64>(), delay in -20i64..=20, a in 0.01f64..100.0) {
        let base = noise(1100, seed);
        let s = base.samples();
        let yi = MonoSignal::new(s[(30 - delay) as usize..(30 - delay) as usize + 1024].to_vec(), 16_000).unwrap();
        let yj = MonoSignal::new(s[30..30 + 1024].to_vec(), 16_000).unwrap();
        let reference = gcc_phat(&yi, &yj, 32, false).unwrap();
        prop_assert_eq!(reference * 16_000.0, delay as f64);
        prop_assert_eq!(gcc_phat(&scaled(&yi, a), &yj, 32, false).unwrap(), reference);
        prop_assert_eq!(gcc_phat(&yi, &scaled(&yj, a), 32, false).unwrap(), reference);
        let fine = gcc_phat(&yi, &yj, 32, true).unwrap();
        prop_assert!((gcc_phat(&scaled(&yi, a), &yj, 32, true).unwrap() - fine).abs() < 1e-9);
    }

    #[test]
    fn grid_surface_is_non_negative_and_vanishes_at_the_source(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let scene = sample_anechoic_scene(&mut rng);
        let spec = GridSpec::for_room(scene.room.width, scene.room.length, 0.1).unwrap();
        let (r, c) = (rng.random_range(0..spec.rows), rng.random_range(0..spec.cols));
        let truth = spec.node(r, c);
        let exact = TdoaSet::theoretical(&scene.mics, truth, SPEED_OF_SOUND);
        let grid = error_grid_on(&spec, &exact, &scene.mics, SPEED_OF_SOUND).unwrap();
        prop_assert!(grid.get(r, c) < 1e-24);
        for row in 0..spec.rows {
            for col in 0..spec.cols {
                let v = grid.get(row, col);
                prop_assert!(v >= 0.0);
                if spec.node(row, col).distance(truth) > 0.05 {
                    prop_assert!(v > 0.0);
                }
            }
        }
        prop_assert_eq!(estimate_source(&grid).unwrap().node, (r, c));

        let noisy: Vec<f64> = (0..6).map(|_| rng.random_range(-0.01..0.01)).collect();
        let random = error_grid_on(&spec, &TdoaSet::from_upper(4, &noisy).unwrap(), &scene.mics, SPEED_OF_SOUND).unwrap();
        prop_assert!(random.cells.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn argmin_ignores_a_constant_offset(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20, k in 0u32..1000) {
        let mut rng = rng_from_seed(seed);
        let spec = GridSpec { origin: Point2::new(0.0, 0.0), resolution: 0.1, rows, cols };
        let cells: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0..50) as f64).collect();
        let shifted: Vec<f64> = cells.iter().map(|v| v + k as f64).collect();
        let a = estimate_source(&ErrorGrid::new(spec, cells).unwrap()).unwrap();
        let b = estimate_source(&ErrorGrid::new(spec, shifted).unwrap()).unwrap();
        prop_assert_eq!(a.node, b.node);
    }

    #[test]
    fn rirs_are_reciprocal_and_start_at_the_direct_path(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let scene = sample_reverberant_scene(&mut rng);
        let cfg = RirConfig::for_room(&scene.room, 16_000, SPEED_OF_SOUND, Some(4)).unwrap();
        let src = scene.source_position();
        let mic = scene.mic_positions()[rng.random_range(0..4)];
        let ab = simulate_rir(&scene.room, src, mic, &cfg).unwrap();
        let ba = simulate_rir(&scene.room, mic, src, &cfg).unwrap();
        prop_assert_eq!(ab.taps.len(), ba.taps.len());
        for (x, y) in ab.taps.samples().iter().zip(ba.taps.samples()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let expected = src.distance(mic) / SPEED_OF_SOUND * 16_000.0;
        prop_assert!((ab.direct_path_delay - expected).abs() <= 1.0);
    }

    #[test]
    fn rir_energy_falls_as_absorption_grows(w in 3.0f64..6.0, l in 3.0f64..6.0, fx in 0.1f64..0.9, fy in 0.1f64..0.9) {
        let room = Room::new(w, l, 3.0, 0.0).unwrap();
        let src = Point3::new(fx * w, fy * l, 1.5);
        let mic = Point3::new((1.0 - fx) * w, 0.5 * l, 1.5);
        prop_assume!(src.distance(mic) > 0.3);
        let e: Vec<f64> = [0.2, 0.5, 0.8]
            .iter()
            .map(|&absorption| {
                let cfg = RirConfig { max_order: 4, absorption, ..RirConfig::anechoic(16_000) };
                simulate_rir(&room, src, mic, &cfg).unwrap().taps.energy()
            })
            .collect();
        prop_assert!(e[0] > e[1] && e[1] > e[2], "{:?}", e);
    }

    #[test]
    fn histograms_conserve_counts(values in prop::collection::vec(0.0f64..8.0, 1..200), width in 0.01f64..1.0) {
        let h = Histogram::new(&values, width, 7.0).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        let cdf = h.cdf();
        prop_assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((cdf.last().unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(h.edges(h.len() - 1).1 >= 7.0 - 1e-9);
    }

    #[test]
    fn error_norms_are_ordered(a in prop::array::uniform2(-10.0f64..10.0), b in prop::array::uniform2(-10.0f64..10.0)) {
        let (e, l) = (euclidean_error(a, b), l1_error(a, b));
        prop_assert!(l >= e - 1e-12);
        prop_assert!(l <= e * core::f64::consts::SQRT_2 + 1e-12);
        prop_assert!(l >= e / core::f64::consts::SQRT_2);
    }

    #[test]
    fn configuration_distance_is_a_metric(s in any::<u64>()) {
        let mut rng = rng_from_seed(s);
        let (a, b, c) = (sample_anechoic_scene(&mut rng), sample_anechoic_scene(&mut rng), sample_reverberant_scene(&mut rng));
        prop_assert_eq!(config_distance(&a, &a).unwrap(), 0.0);
        let (ab, ba) = (config_distance(&a, &b).unwrap(), config_distance(&b, &a).unwrap());
        prop_assert!(ab > 0.0 && (ab - ba).abs() < 1e-12);
        prop_assert!(ab <= config_distance(&a, &c).unwrap() + config_distance(&c, &b).unwrap() + 1e-12);
    }
}

/// Mean distance from the centre of a `2a x 2b` rectangle to a uniform point.
fn mean_distance_to_centre(a: f64, b: f64) -> f64 {
    let d = a.hypot(b);
    (2.0 * a * b * d + a.powi(3) * ((b + d) / a).ln() + b.powi(3) * ((a + d) / b).ln()) / (6.0 * a * b)
}

#[test]
fn room_centre_predictor_matches_its_expected_error() {
    // Average the closed form over the room-size distribution by quadrature.
    let n = 200;
    let mut expected = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = 3.0 + 3.0 * (i as f64 + 0.5) / n as f64;
            let l = 3.0 + 3.0 * (j as f64 + 0.5) / n as f64;
            expected += mean_distance_to_centre(w / 2.0 - 0.5, l / 2.0 - 0.5);
        }
    }
    expected /= (n * n) as f64;

    let mut rng = rng_from_seed(99);
    let errors: Vec<f64> = (0..20_000)
        .map(|_| {
            let s = sample_anechoic_scene(&mut rng);
            euclidean_error([s.source.x, s.source.y], [s.room.width / 2.0, s.room.length / 2.0])
        })
        .collect();
    let (mean, std) = pssl_core::stats::mean_std(&errors);
    let se = std / (errors.len() as f64).sqrt();
    assert!((mean - expected).abs() < 4.0 * se, "mean {mean}, expected {expected}, se {se}");
}

#[test]
fn room_sizes_are_uniform() {
    let mut rng = rng_from_seed(2024);
    let scenes: Vec<_> = (0..10_000).map(|_| sample_reverberant_scene(&mut rng)).collect();
    let crit = ks_critical_1pct(scenes.len());
    let widths: Vec<f64> = scenes.iter().map(|s| s.room.width).collect();
    let lengths: Vec<f64> = scenes.iter().map(|s| s.room.length).collect();
    let rt60: Vec<f64> = scenes.iter().map(|s| s.room.rt60).collect();
    assert!(ks_uniform(&widths, 3.0, 6.0).unwrap() < crit);
    assert!(ks_uniform(&lengths, 3.0, 6.0).unwrap() < crit);
    assert!(ks_uniform(&rt60, 0.3, 0.6).unwrap() < crit);
    // The statistic must notice a wrong support.
    assert!(ks_uniform(&widths, 3.0, 6.5).unwrap() > crit);
}
