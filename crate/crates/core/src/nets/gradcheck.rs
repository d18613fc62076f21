//! Finite-difference checks of whole networks at tiny sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ClassifierConfig, ClassifierNet, EstimatorConfig, EstimatorNet, EstimatorSample, ReconMode,
    ReconSample, ReconstructionConfig, ReconstructionNet, TrunkConfig,
};
use crate::autodiff::gradcheck::{check, GradCheckReport};
use crate::autodiff::{Tape, Tensor};
use crate::error::Result;
use crate::estimation::LossWeights;

/// Entries perturbed per tensor.
const ENTRIES: usize = 4;
const BANDS: usize = 4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .expect("shape matches")
}

fn tiny_trunk(last: usize) -> TrunkConfig {
    let mut widths = vec![4; 11];
    widths.push(last);
    TrunkConfig {
        widths,
        kernel: 3,
        pool: 2,
    }
}

pub fn estimator_case(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EstimatorConfig {
        bands: BANDS,
        trunk: tiny_trunk(3 * BANDS),
    };
    let mut net = EstimatorNet::<f64>::new(cfg, seed)?;
    let side = 16;
    let sample = EstimatorSample {
        rgb: random(&mut rng, &[3, side, side], 0.0, 1.0),
        cube: random(&mut rng, &[BANDS, side * side], 0.0, 1.0),
        label: random(&mut rng, &[3, BANDS], 0.0, 0.2),
    };
    let weights = LossWeights::default();
    let mut params = std::mem::take(&mut net.params);
    check(
        "estimator",
        &mut params,
        std::slice::from_ref(&sample.rgb),
        Some(ENTRIES),
        seed,
        |tape: &mut Tape<f64>, p, v| {
            let s_hat = net.graph(tape, p, v[0])?;
            Ok(super::estimator_loss(tape, s_hat, &sample, &weights)?.0)
        },
    )
}

pub fn classifier_case(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = 3;
    let mut net = ClassifierNet::<f64>::new(
        ClassifierConfig {
            classes,
            trunk: tiny_trunk(classes),
        },
        seed,
    )?;
    // A zero head would leave every earlier gradient at exactly zero.
    let head = net.trunk.convs.last().expect("twelve convs").weight;
    for v in net.params.value_mut(head).data_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let x = random(&mut rng, &[3, 16, 16], 0.0, 1.0);
    let label = rng.random_range(0..classes);
    let mut params = std::mem::take(&mut net.params);
    check(
        "classifier",
        &mut params,
        &[x],
        Some(ENTRIES),
        seed,
        |tape, p, v| {
            let z = net.graph(tape, p, v[0])?;
            tape.softmax_cross_entropy(z, label)
        },
    )
}

pub fn reconstruction_case(seed: u64, mode: ReconMode) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ReconstructionConfig::new(mode, BANDS, 4);
    cfg.extra_blocks = 1;
    let mut net = ReconstructionNet::<f64>::new(cfg.clone(), seed)?;
    let side = 8;
    let sample = ReconSample {
        input: random(&mut rng, &[cfg.input_channels(), side, side], 0.0, 1.0),
        target: random(&mut rng, &[BANDS, side, side], 0.0, 1.0),
    };
    let mut params = std::mem::take(&mut net.params);
    check(
        &format!("reconstruction ({mode:?})"),
        &mut params,
        std::slice::from_ref(&sample.input),
        Some(ENTRIES),
        seed,
        |tape, p, v| {
            let y = net.graph(tape, p, v[0])?;
            let t = tape.constant(sample.target.clone());
            tape.mse_loss(y, t)
        },
    )
}

/// One check per network family for `seed`.
pub fn network_cases(seed: u64) -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        estimator_case(seed)?,
        classifier_case(seed)?,
        reconstruction_case(seed, ReconMode::Generic)?,
        reconstruction_case(seed, ReconMode::Conditional)?,
    ])
}
