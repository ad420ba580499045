use super::*;
use crate::error::Error;
use crate::raster::PlotImage;
use crate::tensor::{AdamConfig, Init, LayerSpec, Mode, Network, Tensor};

fn toy_gan(seed: u64) -> Gan {
    let d = Network::new(
        &[1, 8, 8],
        vec![
            LayerSpec::Flatten,
            LayerSpec::dense(64, 16),
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::dense(16, 8),
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::dense(8, 1),
            LayerSpec::Sigmoid,
        ],
        Init::Normal { std: 0.1 },
        seed,
    )
    .unwrap();
    let g = Network::new(
        &[4],
        vec![
            LayerSpec::dense(4, 16),
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::dense(16, 64),
            LayerSpec::Tanh,
            LayerSpec::Reshape { shape: vec![1, 8, 8] },
        ],
        Init::Normal { std: 0.1 },
        seed + 1,
    )
    .unwrap();
    Gan::from_networks(d, g, 4, AdamConfig::default(), AdamConfig { lr: 1e-3, ..AdamConfig::default() }).unwrap()
}

fn toy_real() -> Tensor {
    Tensor::from_fn(&[2, 1, 8, 8], |i| {
        let (b, p) = (i / 64, i % 64);
        if (p / 8 + p % 8 + b) % 3 == 0 {
            1.0
        } else {
            -1.0
        }
    })
}

fn ring(side: usize) -> PlotImage {
    let c = (side as f64 - 1.0) / 2.0;
    let px = (0..side * side)
        .map(|i| {
            let r = ((i / side) as f64 - c).hypot((i % side) as f64 - c);
            if r > c {
                0
            } else if r > c - 3.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    PlotImage::new(side, px).unwrap()
}

#[test]
fn reference_discriminator_parameter_count() {
    let d = build_discriminator(&DiscriminatorConfig::default(), 0).unwrap();
    assert_eq!(d.param_count_excluding_batchnorm(), 9_734_081);
    let flatten = d.layers().iter().position(|l| matches!(l, LayerSpec::Flatten)).unwrap();
    assert_eq!(d.layer_output_shape(flatten), [36_864]);
    assert_eq!(d.output_shape(), [1]);
}

#[test]
fn discriminator_layer_order() {
    let d = build_discriminator(&DiscriminatorConfig::default(), 0).unwrap();
    let kinds: Vec<&str> = d
        .layers()
        .iter()
        .map(LayerSpec::kind)
        .filter(|k| !matches!(*k, "batchnorm" | "leaky_relu"))
        .collect();
    assert_eq!(
        kinds,
        ["conv2d", "conv2d", "maxpool2d", "conv2d", "maxpool2d", "flatten", "dense", "dense", "dropout", "dense", "sigmoid"]
    );
    let cfg = DiscriminatorConfig::default();
    assert!(matches!(d.layers()[cfg.feature_layer()], LayerSpec::LeakyRelu { .. }));
    assert!(matches!(d.layers()[cfg.feature_layer() + 1], LayerSpec::Dropout { .. }));
}

#[test]
fn reduced_discriminator_composes() {
    let d = build_discriminator(&DiscriminatorConfig::reduced(), 3).unwrap();
    let x = PlotImage::batch(&[&ring(48)]).unwrap();
    let p = d.with_mode(Mode::Inference).predict(&x).unwrap();
    assert_eq!(p.shape(), [1, 1]);
    assert!(p.data()[0] > 0.0 && p.data()[0] < 1.0);
}

#[test]
fn bad_side_rejected() {
    let cfg = DiscriminatorConfig {
        side: 50,
        ..DiscriminatorConfig::default()
    };
    assert!(matches!(build_discriminator(&cfg, 0), Err(Error::Config(_))));
    let g = GeneratorConfig {
        start: 4,
        ..GeneratorConfig::reduced()
    };
    assert!(matches!(build_generator(&g, 0), Err(Error::Config(_))));
}

#[test]
fn generator_shapes_and_counts() {
    let g = build_generator(&GeneratorConfig::default(), 0).unwrap();
    assert_eq!(g.output_shape(), [1, 48, 48]);
    assert_eq!(g.param_count_excluding_batchnorm(), 5_515_457);
    let big = build_generator(&GeneratorConfig::full_scale(), 0).unwrap();
    let n = big.param_count_excluding_batchnorm();
    assert_eq!(n, 21_844_353);
    assert!((20_000_000..=28_000_000).contains(&n));
}

#[test]
fn generator_output_is_tanh_bounded() {
    let g = build_generator(&GeneratorConfig::reduced(), 9).unwrap();
    let z = LatentVector::batch(&[LatentVector::sample(100, 4, 0), LatentVector::sample(100, 4, 1)]).unwrap();
    let (y, _) = g.forward(&z, 0).unwrap();
    assert_eq!(y.shape(), [2, 1, 48, 48]);
    assert!(y.data().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn zero_weight_discriminator_scores_one_half() {
    let cfg = DiscriminatorConfig::reduced();
    let d = Network::new(&[1, 48, 48], build_discriminator(&cfg, 0).unwrap().layers().to_vec(), Init::Zeros, 0).unwrap();
    let m = RecognizerModel::new(d, 0.5, "x", RecognizerKind::Interesting, Default::default()).unwrap();
    let r = m.recognize(&ring(48)).unwrap();
    assert_eq!(r.score, 0.5);
    assert!(!r.accepted);
    assert!(matches!(m.recognize(&ring(24)), Err(Error::Geometry { expected: 48, got: 24 })));
}

#[test]
fn identical_batches_have_zero_feature_matching_loss() {
    let gan = toy_gan(1);
    let real = toy_real();
    assert_eq!(gan.feature_matching_loss(&real, &real).unwrap(), 0.0);
}

#[test]
fn stages_only_touch_their_own_network() {
    let mut gan = toy_gan(2);
    let real = toy_real();
    let g_before = gan.generator.clone();
    gan.discriminator_step(&real, 5).unwrap();
    assert_eq!(gan.generator, g_before);
    let d_before = gan.discriminator.clone();
    gan.generator_step(&real, 5).unwrap();
    assert_eq!(gan.discriminator, d_before);
    assert_ne!(gan.generator, g_before);
}

#[test]
fn toy_feature_matching_converges() {
    let mut gan = toy_gan(3);
    let real = toy_real();
    let losses: Vec<f64> = (0..50).map(|i| gan.train_iteration(&real, i).unwrap().feature_matching).collect();
    assert!(losses[49] <= 0.5 * losses[0], "{} -> {}", losses[0], losses[49]);
}

fn tiny_cfgs() -> (DiscriminatorConfig, GeneratorConfig) {
    (
        DiscriminatorConfig {
            side: 16,
            channels: [2, 4, 4],
            fc: [8, 8],
            ..DiscriminatorConfig::default()
        },
        GeneratorConfig {
            latent: 8,
            fc1: 16,
            channels: [8, 4, 4, 2],
            start: 1,
            side: 16,
            ..GeneratorConfig::default()
        },
    )
}

#[test]
fn zero_budget_returns_flagged_model() {
    let (d, g) = tiny_cfgs();
    let t = TrainingConfig {
        max_iterations: 0,
        ..TrainingConfig::default()
    };
    let out = train(&[ring(16)], &[ring(16)], "ring", RecognizerKind::Interesting, &d, &g, &t, &mut ProxyOnly).unwrap();
    assert_eq!(out.report.iterations, 0);
    assert_eq!(out.report.stop_reason, StopReason::Budget);
    assert!(!out.report.validation_complete);
    assert!(!out.model.provenance().validation_complete);
}

#[test]
fn training_is_deterministic_and_hook_can_stop() {
    struct StopAtFirst(usize);
    impl InspectionHook for StopAtFirst {
        fn inspect(&mut self, it: usize, _: &Gan) -> InspectionDecision {
            self.0 = it;
            InspectionDecision::Stop
        }
    }
    let (d, g) = tiny_cfgs();
    let t = TrainingConfig {
        max_iterations: 200,
        check_period: 5,
        seed: 4,
        ..TrainingConfig::default()
    };
    let set = [ring(16)];
    let a = train(&set, &set, "ring", RecognizerKind::Interesting, &d, &g, &t, &mut ProxyOnly).unwrap();
    let b = train(&set, &set, "ring", RecognizerKind::Interesting, &d, &g, &t, &mut ProxyOnly).unwrap();
    assert_eq!(a.report.losses, b.report.losses);
    assert_eq!(a.report.checks, b.report.checks);
    let mut hook = StopAtFirst(0);
    let c = train(&set, &set, "ring", RecognizerKind::Interesting, &d, &g, &t, &mut hook).unwrap();
    if c.report.validation_complete {
        assert_eq!(c.report.stop_reason, StopReason::Manual);
        assert_eq!(c.report.iterations, hook.0);
        assert!(c.model.recognize(&set[0]).unwrap().accepted);
    }
}

#[test]
fn invalid_tau_rejected() {
    let (d, g) = tiny_cfgs();
    for tau in [0.0, 1.0, -0.1] {
        let t = TrainingConfig {
            tau,
            ..TrainingConfig::default()
        };
        assert!(matches!(Gan::new(&d, &g, &t), Err(Error::Config(_))));
    }
}

#[test]
fn generator_samples_are_seeded() {
    let g = build_generator(&GeneratorConfig::reduced(), 1).unwrap();
    assert!(sample_generator(&g, 0, 1).unwrap().is_empty());
    let a = sample_generator(&g, 3, 7).unwrap();
    let b = sample_generator(&g, 3, 7).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|im| im.side() == 48));
}

fn trained_like_model() -> RecognizerModel {
    let d = build_discriminator(&DiscriminatorConfig::reduced(), 11).unwrap();
    RecognizerModel::new(d, 0.5, "edge_ring", RecognizerKind::Interesting, Default::default()).unwrap()
}

fn random_images(n: usize, seed: u64) -> Vec<PlotImage> {
    use rand::Rng;
    let mut r = crate::rng::stream(seed, 0);
    (0..n)
        .map(|_| PlotImage::new(48, (0..48 * 48).map(|_| r.random_range(-1..=1)).collect()).unwrap())
        .collect()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = trained_like_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.psck");
    save_checkpoint(&Checkpoint::Recognizer(model.clone()), &path).unwrap();
    let loaded = load_recognizer(&path).unwrap();
    assert_eq!(loaded, model);
    let imgs = random_images(10, 1);
    let refs: Vec<&PlotImage> = imgs.iter().collect();
    let (a, b) = (model.scores(&refs).unwrap(), loaded.scores(&refs).unwrap());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(to_bytes(&Checkpoint::Recognizer(loaded)).unwrap(), bytes);

    let g = build_generator(&GeneratorConfig::reduced(), 2).unwrap();
    let gp = dir.path().join("g.psck");
    save_checkpoint(&Checkpoint::Generator(g.clone()), &gp).unwrap();
    assert_eq!(load_generator(&gp).unwrap(), g);
    assert!(load_recognizer(&gp).is_err());
}

#[test]
fn checkpoint_corruption_is_detected() {
    let bytes = to_bytes(&Checkpoint::Recognizer(trained_like_model())).unwrap();
    let mut flipped = bytes.clone();
    let k = bytes.len() - 100;
    flipped[k] ^= 0x01;
    assert!(matches!(from_bytes(&flipped), Err(Error::Checksum { .. })));
    assert!(matches!(from_bytes(&bytes[..bytes.len() / 2]), Err(Error::Checksum { .. } | Error::Checkpoint(_))));
    assert!(matches!(from_bytes(&bytes[..8]), Err(Error::Checkpoint(_))));
    let mut future = bytes.clone();
    future[4..6].copy_from_slice(&(VERSION + 1).to_le_bytes());
    assert!(matches!(
        from_bytes(&future),
        Err(Error::CheckpointVersion { found, supported }) if found == VERSION + 1 && supported == VERSION
    ));
    assert!(matches!(from_bytes(b"NOPE"), Err(Error::Checkpoint(_))));
}

#[test]
fn acceptance_is_monotone_in_tau() {
    let model = trained_like_model();
    let imgs = random_images(20, 2);
    let mut last = usize::MAX;
    for tau in [0.0, 0.2, 0.4, 0.45, 0.5, 0.55, 0.9] {
        let m = model.with_tau(tau).unwrap();
        let n = imgs.iter().filter(|im| m.recognize(im).unwrap().accepted).count();
        assert!(n <= last);
        last = n;
    }
}
