use hsrecon::autodiff::{ParamSet, Tape, Tensor};
use hsrecon::estimation::{total_loss, FlattenedScene, LossWeights};
use hsrecon::nets::gradcheck::network_cases;
use hsrecon::nets::*;
use hsrecon::sensitivity::{evaluate_gmm, sample_continuous, SmoothnessOperator};
use hsrecon::spectral::{render_rgb, RgbImage, SpectralCube, WavelengthGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    RgbImage::new(h, w, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn random_cube(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SpectralCube {
    let grid = WavelengthGrid::default();
    SpectralCube::new(
        h,
        w,
        grid,
        (0..h * w * grid.count)
            .map(|_| rng.random::<f64>())
            .collect(),
    )
    .unwrap()
}

fn tiny_estimator<T: hsrecon::autodiff::Real>(seed: u64) -> EstimatorNet<T> {
    EstimatorNet::new(EstimatorConfig::scaled(31, 2), seed).unwrap()
}

#[test]
fn estimator_output_shape_and_size_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = tiny_estimator::<f32>(0);
    let s = net.estimate(&random_image(&mut rng, 16, 20)).unwrap();
    assert_eq!(s.bands(), 31);
    assert_eq!(s.values().len(), 93);
    assert!(matches!(
        net.estimate(&random_image(&mut rng, 15, 32)),
        Err(hsrecon::Error::Shape(_))
    ));
    assert_eq!(
        EstimatorConfig::full(31).trunk.widths,
        vec![32, 32, 32, 64, 64, 64, 128, 128, 128, 128, 128, 93]
    );
    assert!(EstimatorNet::<f32>::new(
        EstimatorConfig {
            bands: 30,
            ..EstimatorConfig::full(31)
        },
        0
    )
    .is_err());
}

#[test]
fn constant_input_gives_size_independent_estimate() {
    // 1x1 kernels keep constant maps constant; 3x3 zero padding would not.
    let mut cfg = EstimatorConfig::scaled(31, 2);
    cfg.trunk.kernel = 1;
    let net = EstimatorNet::<f64>::new(cfg, 3).unwrap();
    let small = RgbImage::new(16, 16, [0.2, 0.5, 0.7].repeat(256)).unwrap();
    let large = RgbImage::new(48, 32, [0.2, 0.5, 0.7].repeat(48 * 32)).unwrap();
    let a = net.estimate(&small).unwrap();
    let b = net.estimate(&large).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
    }
}

#[test]
fn pointwise_variant_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cfg = EstimatorConfig::scaled(31, 2);
    cfg.trunk.kernel = 1;
    cfg.trunk.pool = 1;
    let net = EstimatorNet::<f64>::new(cfg, 2).unwrap();
    let img = random_image(&mut rng, 6, 5);
    let mut px: Vec<[f64; 3]> = (0..30).map(|i| img.pixel(i / 5, i % 5)).collect();
    px.reverse();
    px.swap(3, 17);
    let shuffled = RgbImage::new(6, 5, px.concat()).unwrap();
    let a = net.estimate(&img).unwrap();
    let b = net.estimate(&shuffled).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-3), "{x} vs {y}");
    }
}

#[test]
fn network_loss_matches_the_estimation_module() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = tiny_estimator::<f64>(4);
    let cube = random_cube(&mut rng, 16, 16);
    let sens = evaluate_gmm(&sample_continuous(4), WavelengthGrid::default()).unwrap();
    let rgb = render_rgb(&cube, &sens).unwrap();
    let sample = EstimatorSample::<f64>::new(&cube, &sens, &rgb).unwrap();
    let weights = LossWeights::default();
    let mut tape = Tape::new();
    let (loss, _) = net.loss(&mut tape, &net.params, &sample, &weights).unwrap();
    let s_hat = net.estimate(&rgb).unwrap();
    let reference = total_loss(
        &FlattenedScene::from_images(&cube, &rgb).unwrap(),
        &sens,
        &s_hat,
        &SmoothnessOperator::new(31).unwrap(),
        &weights,
    )
    .unwrap()
    .total;
    let got = tape.value(loss).data()[0];
    assert!(
        (got - reference).abs() <= 1e-6 * reference.max(1.0),
        "{got} vs {reference}"
    );
}

fn tiny_estimator_run(seed: u64, weights: LossWeights) -> TrainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<EstimatorSample<f32>> = (0..6)
        .map(|i| {
            let cube = random_cube(&mut rng, 16, 16);
            let sens = evaluate_gmm(&sample_continuous(i), WavelengthGrid::default()).unwrap();
            let rgb = render_rgb(&cube, &sens).unwrap();
            EstimatorSample::new(&cube, &sens, &rgb).unwrap()
        })
        .collect();
    let mut net = tiny_estimator::<f32>(seed);
    let cfg = TrainingConfig {
        loss_weights: weights,
        batch_size: 3,
        epochs: 3,
        seed,
        ..TrainingConfig::default()
    };
    let mut params = std::mem::take(&mut net.params);
    fit(
        &mut params,
        &samples[..4],
        &samples[4..],
        &cfg,
        |t, p, s| Ok(net.loss(t, p, s, &weights)?.0),
        |p: &ParamSet<f32>, s| {
            let mut t = Tape::inference();
            Ok(net.loss(&mut t, p, s, &weights)?.1).map(|v| t.value(v).data()[0] as f64)
        },
    )
    .unwrap()
}

#[test]
fn estimator_training_is_deterministic_and_accepts_image_only_weights() {
    let a = tiny_estimator_run(11, LossWeights::default());
    let b = tiny_estimator_run(11, LossWeights::default());
    assert_eq!(a, b);
    let c = tiny_estimator_run(11, LossWeights::new(1.0, 0.0, 0.0).unwrap());
    assert_eq!(c.log.len(), 3);
    assert!(c.log.iter().all(|e| e.train_loss.is_finite()));
}

#[test]
fn untrained_classifier_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = ClassifierNet::<f32>::new(ClassifierConfig::scaled(5, 2), 1).unwrap();
    for _ in 0..3 {
        let p = net.probabilities(&random_image(&mut rng, 16, 16)).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-7));
    }
}

#[test]
fn classifier_probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = ClassifierNet::<f64>::new(ClassifierConfig::scaled(4, 2), 1).unwrap();
    for p in net.params.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    for _ in 0..5 {
        let p = net.probabilities(&random_image(&mut rng, 16, 16)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|v| *v >= 0.0));
    }
}

fn cast_image(rng: &mut ChaCha8Rng, class: usize) -> Tensor<f32> {
    let tint = if class == 0 {
        [1.0, 0.6, 0.4]
    } else {
        [0.4, 0.6, 1.0]
    };
    let v: Vec<f64> = (0..16 * 16)
        .flat_map(|_| {
            let l = rng.random_range(0.2..1.0);
            tint.map(|t| t * l)
        })
        .collect();
    RgbImage::new(16, 16, v).unwrap().to_tensor()
}

#[test]
fn classifier_learns_disjoint_color_casts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<(Tensor<f32>, usize)> = (0..80)
        .map(|i| (cast_image(&mut rng, i % 2), i % 2))
        .collect();
    let test: Vec<(Tensor<f32>, usize)> = (0..40)
        .map(|i| (cast_image(&mut rng, i % 2), i % 2))
        .collect();
    let mut net = ClassifierNet::<f32>::new(ClassifierConfig::scaled(2, 4), 0).unwrap();
    let cfg = TrainingConfig {
        epochs: 6,
        batch_size: 8,
        optimizer: hsrecon::autodiff::Optimizer::adam(3e-3),
        ..TrainingConfig::default()
    };
    let mut params = std::mem::take(&mut net.params);
    fit(
        &mut params,
        &data,
        &data[..20],
        &cfg,
        |t, p, (x, y)| net.loss(t, p, x, *y),
        |p: &ParamSet<f32>, (x, y)| {
            let mut t = Tape::inference();
            let l = net.loss(&mut t, p, x, *y)?;
            Ok(t.value(l).data()[0] as f64)
        },
    )
    .unwrap();
    net.params = params;
    let correct = test
        .iter()
        .filter(|(x, y)| net.predict_tensor(x).unwrap() == *y)
        .count();
    assert!(
        correct as f64 >= 0.95 * test.len() as f64,
        "{correct}/{}",
        test.len()
    );
}

#[test]
fn reconstruction_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (h, w, extra) in [(8, 8, 0), (9, 13, 1), (16, 10, 2)] {
        for mode in [
            ReconMode::Generic,
            ReconMode::Specialized,
            ReconMode::Conditional,
        ] {
            let mut cfg = ReconstructionConfig::new(mode, 31, 4);
            cfg.extra_blocks = extra;
            let net = ReconstructionNet::<f32>::new(cfg, 0).unwrap();
            assert_eq!(net.blocks.len(), 2 + extra);
            let c = net.config.input_channels();
            assert_eq!(
                c,
                if mode == ReconMode::Conditional {
                    96
                } else {
                    3
                }
            );
            let x = Tensor::new(
                vec![c, h, w],
                (0..c * h * w).map(|_| rng.random::<f32>()).collect(),
            )
            .unwrap();
            assert_eq!(net.forward_tensor(&x).unwrap().shape(), &[31, h, w]);
            let wrong = Tensor::zeros(&[if c == 3 { 96 } else { 3 }, h, w]);
            assert!(matches!(
                net.forward_tensor(&wrong),
                Err(hsrecon::Error::Shape(_))
            ));
        }
    }
}

#[test]
fn zero_core_leaves_the_shallow_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net =
        ReconstructionNet::<f64>::new(ReconstructionConfig::new(ReconMode::Conditional, 31, 4), 1)
            .unwrap();
    for id in [net.conv_out.weight, net.conv_out.bias] {
        net.params
            .value_mut(id)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    let img = random_image(&mut rng, 8, 8);
    let sens = evaluate_gmm(&sample_continuous(1), WavelengthGrid::default()).unwrap();
    let x = net.input_for(&img, Some(&sens)).unwrap();
    assert_eq!(
        net.forward_tensor(&x).unwrap(),
        net.shallow_tensor(&x).unwrap()
    );
    assert!(net.input_for(&img, None).is_err());
}

#[test]
fn checkpoints_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = random_image(&mut rng, 16, 16);

    let est = tiny_estimator::<f32>(5);
    let p = dir.path().join("est.sfck");
    est.save(&p).unwrap();
    let back = EstimatorNet::<f32>::load(&p).unwrap();
    assert_eq!(est.estimate(&img).unwrap(), back.estimate(&img).unwrap());
    assert_eq!(checkpoint_kind(&p).unwrap(), "estimator");

    let cls = ClassifierNet::<f32>::new(ClassifierConfig::scaled(3, 2), 5).unwrap();
    let p = dir.path().join("cls.sfck");
    cls.save(&p).unwrap();
    assert_eq!(
        cls.probabilities(&img).unwrap(),
        ClassifierNet::<f32>::load(&p)
            .unwrap()
            .probabilities(&img)
            .unwrap()
    );
    assert!(EstimatorNet::<f32>::load(&p).is_err());

    let mut cfg = ReconstructionConfig::new(ReconMode::Generic, 31, 4);
    cfg.extra_blocks = 2;
    let rec = ReconstructionNet::<f32>::new(cfg, 5).unwrap();
    let p = dir.path().join("rec.sfck");
    rec.save(&p).unwrap();
    let again = ReconstructionNet::<f32>::load(&p).unwrap();
    assert_eq!(again.config.extra_blocks, 2);
    assert_eq!(
        rec.reconstruct(&img, None).unwrap(),
        again.reconstruct(&img, None).unwrap()
    );
    let bytes = std::fs::read(&p).unwrap();
    again.save(&p).unwrap();
    assert_eq!(bytes, std::fs::read(&p).unwrap());
}

fn forced_classifier(classes: usize, class: usize) -> ClassifierNet<f32> {
    let mut net = ClassifierNet::<f32>::new(ClassifierConfig::scaled(classes, 2), 0).unwrap();
    let bias = net.trunk.convs.last().unwrap().bias;
    net.params.value_mut(bias).data_mut()[class] = 10.0;
    net
}

#[test]
fn selection_dispatches_to_the_predicted_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let img = random_image(&mut rng, 16, 16);
    let models: Vec<ReconstructionNet<f32>> = (0..3)
        .map(|s| {
            ReconstructionNet::new(ReconstructionConfig::new(ReconMode::Specialized, 31, 4), s)
                .unwrap()
        })
        .collect();
    for k in 0..3 {
        let (class, cube) = specialized_select(&img, &forced_classifier(3, k), &models).unwrap();
        assert_eq!(class, k);
        assert_eq!(cube, models[k].reconstruct(&img, None).unwrap());
    }
    let single = ClassifierNet::<f32>::new(ClassifierConfig::scaled(1, 2), 0).unwrap();
    assert_eq!(
        specialized_select(&img, &single, &models[1..2]).unwrap().0,
        0
    );
    assert!(matches!(
        specialized_select(&img, &forced_classifier(2, 0), &models),
        Err(hsrecon::Error::Configuration(_))
    ));
}

#[test]
fn networks_pass_gradient_checks() {
    for seed in 0..2 {
        for r in network_cases(seed).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }
}
