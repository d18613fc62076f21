use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hsrecon::autodiff::Tape;
use hsrecon::data::{toy_scene, ToySceneSpec};
use hsrecon::estimation::{tikhonov_estimate, FlattenedScene};
use hsrecon::nets::{
    EstimatorConfig, EstimatorNet, ReconMode, ReconstructionConfig, ReconstructionNet,
};
use hsrecon::sensitivity::{evaluate_gmm, sample_continuous, SmoothnessOperator};
use hsrecon::spectral::render_rgb;
use hsrecon::WavelengthGrid;

fn scene() -> hsrecon::SpectralCube {
    toy_scene(&ToySceneSpec::default(), 0).unwrap()
}

fn rendering(c: &mut Criterion) {
    let cube = scene();
    let s = evaluate_gmm(&sample_continuous(1), WavelengthGrid::default()).unwrap();
    c.bench_function("render 64x64", |b| {
        b.iter(|| render_rgb(black_box(&cube), &s).unwrap())
    });
}

fn tikhonov(c: &mut Criterion) {
    let cube = scene();
    let s = evaluate_gmm(&sample_continuous(2), WavelengthGrid::default()).unwrap();
    let fs = FlattenedScene::rendered(&cube, &s).unwrap();
    let t = SmoothnessOperator::new(31).unwrap();
    c.bench_function("tikhonov 64x64", |b| {
        b.iter(|| tikhonov_estimate(black_box(&fs), &t, 1e-3).unwrap())
    });
}

fn networks(c: &mut Criterion) {
    let cube = scene();
    let s = evaluate_gmm(&sample_continuous(3), WavelengthGrid::default()).unwrap();
    let img = render_rgb(&cube, &s).unwrap();
    let x = img.to_tensor::<f32>();
    let est = EstimatorNet::<f32>::new(EstimatorConfig::scaled(31, 8), 0).unwrap();
    c.bench_function("estimator forward 64x64", |b| {
        b.iter(|| est.estimate_tensor(black_box(&x)).unwrap())
    });

    let rec =
        ReconstructionNet::<f32>::new(ReconstructionConfig::new(ReconMode::Generic, 31, 16), 0)
            .unwrap();
    c.bench_function("reconstruction forward 64x64", |b| {
        b.iter(|| rec.forward_tensor(black_box(&x)).unwrap())
    });
    let target = cube.to_tensor::<f32>();
    c.bench_function("reconstruction forward+backward 64x64", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let sample = hsrecon::nets::ReconSample {
                input: x.clone(),
                target: target.clone(),
            };
            let l = rec.loss(&mut tape, &rec.params, &sample).unwrap();
            let mut g = rec.params.zero_grads();
            tape.backward(l, &mut g).unwrap();
            g
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = rendering, tikhonov, networks
}
criterion_main!(benches);
