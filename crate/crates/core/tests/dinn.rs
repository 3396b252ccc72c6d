use pssl_core::autodiff::{Graph, ParamStore, Tensor};
use pssl_core::dinn::*;
use pssl_core::rng::rng_from_seed;
use rand::Rng;

fn config(variant: Variant, bins: usize) -> ArchitectureConfig {
    let mut c = ArchitectureConfig::new(variant, Scale::Toy, 4, if variant == Variant::Crnn { 0 } else { 11 });
    c.input_bins = bins;
    c
}

fn random_dataset(n: usize, bins: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut d = Dataset::new([8, 14, bins], 11);
    for _ in 0..n {
        let f: Vec<f32> = (0..8 * 14 * bins).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m: Vec<f32> = (0..11).map(|_| rng.random_range(0.5..5.5)).collect();
        d.push(&f, &m, [rng.random_range(0.5..5.5), rng.random_range(0.5..5.5)]).unwrap();
    }
    d
}

#[test]
fn toy_shape_chain() {
    let c = ArchitectureConfig::new(Variant::Dinn, Scale::Toy, 4, 11);
    assert_eq!((c.input_channels, c.input_frames, c.input_bins), (8, 14, 513));
    let shapes = c.block_shapes().unwrap();
    assert_eq!(shapes, vec![[16, 6, 256], [32, 5, 127], [64, 4, 63], [64, 3, 31]]);
    assert_eq!(c.feature_dim(), 128);
    assert_eq!(c.fusion_dim(), 139);

    let model = Model::<f32>::build(c, &mut rng_from_seed(1)).unwrap();
    let data = random_dataset(3, 513, 2);
    let (x, phi, _) = data.batch::<f32>(&[0, 1, 2]);
    let mut g = Graph::new();
    let vars = model.param_vars(&mut g);
    let xv = g.input(x);
    let pv = g.input(phi);
    let fw = model.forward(&mut g, &vars, xv, Some(pv), false).unwrap();
    assert_eq!(g.shape(fw.features), &[3, 128]);
    assert_eq!(g.shape(fw.output), &[3, 2]);
}

#[test]
fn exact_parameter_counts() {
    // conv blocks: weights, biases and the two batch-norm vectors
    fn conv(cin: usize, k: usize) -> usize {
        k * cin * 4 + k + 2 * k
    }
    fn gru(d: usize, h: usize) -> usize {
        2 * (3 * h * d + 3 * h * h + 6 * h)
    }
    let paper = conv(8, 64) + conv(64, 128) + conv(128, 256) + conv(256, 512) + gru(512, 256) + (523 * 523 + 523) + (523 * 2 + 2);
    let m = Model::<f32>::build(ArchitectureConfig::new(Variant::Dinn, Scale::Paper, 4, 11), &mut rng_from_seed(0)).unwrap();
    assert_eq!(m.num_params(), paper);
    assert_eq!(paper, 2_150_876);

    let toy = conv(8, 16) + conv(16, 32) + conv(32, 64) + conv(64, 64) + gru(64, 64) + (139 * 139 + 139) + (139 * 2 + 2);
    let m = Model::<f32>::build(ArchitectureConfig::new(Variant::Dinn, Scale::Toy, 4, 11), &mut rng_from_seed(0)).unwrap();
    assert_eq!(m.num_params(), toy);

    let emb = toy + (11 * 22 + 22) + (22 * 11 + 11);
    let m = Model::<f32>::build(ArchitectureConfig::new(Variant::DinnEmbedding, Scale::Toy, 4, 11), &mut rng_from_seed(0)).unwrap();
    assert_eq!(m.num_params(), emb);

    let crnn = toy - (139 * 139 + 139) - (139 * 2 + 2) + (128 * 128 + 128) + (128 * 2 + 2);
    let m = Model::<f32>::build(ArchitectureConfig::new(Variant::Crnn, Scale::Toy, 4, 11), &mut rng_from_seed(0)).unwrap();
    assert_eq!(m.num_params(), crnn);
}

#[test]
fn config_validation() {
    let mut c = ArchitectureConfig::new(Variant::Crnn, Scale::Toy, 4, 0);
    c.metadata_dim = 3;
    assert!(Model::<f32>::build(c, &mut rng_from_seed(0)).is_err());
    let c = ArchitectureConfig::new(Variant::Dinn, Scale::Toy, 4, 0);
    assert!(Model::<f32>::build(c, &mut rng_from_seed(0)).is_err());
    let mut c = ArchitectureConfig::new(Variant::Dinn, Scale::Toy, 4, 11);
    c.pools = vec![(2, 2); 4];
    assert!(c.block_shapes().is_err());
}

#[test]
fn same_seed_same_init() {
    let c = config(Variant::Dinn, 513);
    let a = Model::<f32>::build(c.clone(), &mut rng_from_seed(7)).unwrap();
    let b = Model::<f32>::build(c.clone(), &mut rng_from_seed(7)).unwrap();
    let d = Model::<f32>::build(c, &mut rng_from_seed(8)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, d);
}

#[test]
fn metadata_presence_is_enforced() {
    let m = Model::<f32>::build(config(Variant::Crnn, 64), &mut rng_from_seed(1)).unwrap();
    let data = random_dataset(2, 64, 3);
    let (x, phi, _) = data.batch::<f32>(&[0, 1]);
    assert!(m.predict(x.clone(), Some(phi.clone())).is_err());
    assert_eq!(m.predict(x.clone(), None).unwrap().len(), 2);
    let d = Model::<f32>::build(config(Variant::Dinn, 64), &mut rng_from_seed(1)).unwrap();
    assert!(d.predict(x.clone(), None).is_err());
    assert!(d.predict(x, Some(phi)).is_ok());
}

#[test]
fn crnn_ignores_metadata_and_keeps_order() {
    let m = Model::<f32>::build(config(Variant::Crnn, 64), &mut rng_from_seed(1)).unwrap();
    let a = random_dataset(5, 64, 4);
    let mut b = a.clone();
    b.metadata.iter_mut().for_each(|v| *v += 1.0);
    let pa = predict_dataset(&m, &a, 2).unwrap();
    assert_eq!(pa, predict_dataset(&m, &b, 3).unwrap());
    for (i, p) in pa.iter().enumerate() {
        assert_eq!(*p, m.predict(a.batch::<f32>(&[i]).0, None).unwrap()[0]);
    }
}

#[test]
fn dinn_output_depends_on_metadata() {
    let m = Model::<f64>::build(config(Variant::Dinn, 64), &mut rng_from_seed(1)).unwrap();
    let data = random_dataset(2, 64, 5);
    let (x, phi, _) = data.batch::<f64>(&[0, 1]);
    let mut g = Graph::new();
    let vars = m.param_vars(&mut g);
    let xv = g.input(x);
    let pv = g.param(phi);
    let out = m.forward(&mut g, &vars, xv, Some(pv), false).unwrap().output;
    let s = g.sum(out);
    g.backward(s).unwrap();
    assert!(g.grad(pv).unwrap().iter().any(|&v| v.abs() > 1e-6));
}

#[test]
fn full_toy_network_gradient_check() {
    for variant in [Variant::Dinn, Variant::DinnEmbedding, Variant::Crnn] {
        let m = Model::<f64>::build(config(variant, 513), &mut rng_from_seed(3)).unwrap();
        let data = random_dataset(2, 513, 6);
        let (x, phi, y) = data.batch::<f64>(&[0, 1]);
        let phi = variant.uses_metadata().then_some(&phi);
        let r = gradient_check(&m, &x, phi, &y, 2).unwrap();
        assert!(r.max_rel_error < 1e-4, "{variant:?}: {r:?}");
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let train_data = random_dataset(8, 64, 7);
    let cfg = TrainConfig { lr: 0.0, batch_size: 4, epochs: 1, ..TrainConfig::toy() };
    let mut st = TrainState::new(config(Variant::Dinn, 64), &cfg).unwrap();
    let before = st.model.params.clone();
    train(&mut st, &train_data, &train_data, &cfg, |_| {}).unwrap();
    assert_eq!(st.model.params, before);
    assert_eq!(st.history.len(), 1);
}

#[test]
fn resume_is_bit_identical() {
    let train_data = random_dataset(12, 64, 8);
    let val = random_dataset(4, 64, 9);
    let mut cfg = TrainConfig { batch_size: 4, epochs: 3, seed: 11, ..TrainConfig::toy() };
    let mut full = TrainState::new(config(Variant::DinnEmbedding, 64), &cfg).unwrap();
    train(&mut full, &train_data, &val, &cfg, |_| {}).unwrap();

    cfg.epochs = 1;
    let mut part = TrainState::new(config(Variant::DinnEmbedding, 64), &cfg).unwrap();
    train(&mut part, &train_data, &val, &cfg, |_| {}).unwrap();
    let mut resumed = part.clone();
    cfg.epochs = 3;
    train(&mut resumed, &train_data, &val, &cfg, |_| {}).unwrap();
    assert_eq!(resumed, full);
}

#[test]
fn training_is_deterministic_and_keeps_best() {
    let train_data = random_dataset(10, 64, 10);
    let val = random_dataset(4, 64, 11);
    let cfg = TrainConfig { batch_size: 5, epochs: 4, seed: 3, ..TrainConfig::toy() };
    let run = || {
        let mut st = TrainState::new(config(Variant::Crnn, 64), &cfg).unwrap();
        train(&mut st, &train_data, &val, &cfg, |_| {}).unwrap();
        st
    };
    let a = run();
    assert_eq!(a, run());
    let best = a.best.as_ref().unwrap();
    let min = a.history.iter().map(|r| r.val_error).fold(f64::INFINITY, f64::min);
    assert_eq!(best.val_error, min);
    assert!((mean_error(&a.best_model(), &val).unwrap() - min).abs() < 1e-6);
}

#[test]
fn overfits_ten_samples() {
    let data = random_dataset(10, 64, 12);
    let idx: Vec<usize> = (0..10).collect();
    for variant in [Variant::Dinn, Variant::DinnEmbedding, Variant::Crnn] {
        let cfg = TrainConfig { batch_size: 10, seed: 1, ..TrainConfig::toy() };
        let mut st = TrainState::new(config(variant, 64), &cfg).unwrap();
        let mut best = f64::INFINITY;
        for step in 1..=500 {
            train_step(&mut st, &data, &idx).unwrap();
            if step % 50 == 0 {
                best = best.min(mean_error(&st.model, &data).unwrap());
            }
        }
        assert!(best < 0.05, "{variant:?}: {best}");
    }
}

#[test]
fn empty_sets_are_rejected() {
    let cfg = TrainConfig::toy();
    let mut st = TrainState::new(config(Variant::Dinn, 64), &cfg).unwrap();
    let empty = Dataset::new([8, 14, 64], 11);
    let some = random_dataset(2, 64, 1);
    assert!(train(&mut st, &empty, &some, &cfg, |_| {}).is_err());
    assert!(train(&mut st, &some, &empty, &cfg, |_| {}).is_err());
}

#[test]
fn param_store_casts_round_trip() {
    let m = Model::<f32>::build(config(Variant::Dinn, 64), &mut rng_from_seed(1)).unwrap();
    let back: ParamStore<f32> = m.params.cast::<f64>().cast();
    assert_eq!(back, m.params);
    let t: Tensor<f32> = Tensor::zeros(&[2, 3]);
    assert_eq!(t.numel(), 6);
}
