//! Seeded toy-scale experiments: estimator training, the generic versus
//! conditional comparison, the sweep over the number of cameras, and the
//! self-ensemble comparison.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Optimizer, ParamSet, Real, Tape, Tensor};
use crate::data::{
    assemble_dataset, extract_patches, generate_toy_scenes, DatasetConfig, ScenePair,
    SensitivitySource, Split, ToySceneSpec,
};
use crate::error::{Error, Result};
use crate::estimation::{reconstructed_rgb_rmse, FlattenedScene};
use crate::metrics::rmse;
use crate::nets::{
    fit, self_ensemble_predict, ClassifierConfig, ClassifierNet, EstimatorConfig, EstimatorNet,
    EstimatorSample, ReconMode, ReconSample, ReconstructionConfig, ReconstructionNet, TrainOutcome,
    TrainingConfig,
};
use crate::sensitivity::{evaluate_gmm, sample_continuous, CameraSensitivitySet};
use crate::spectral::{render_rgb, RgbImage, SensitivityMatrix, SpectralCube, WavelengthGrid};

/// Generates scenes and pairs them with sensitivities from `source`.
pub fn toy_pairs(
    spec: &ToySceneSpec,
    count: usize,
    source: SensitivitySource,
    cameras: Option<&CameraSensitivitySet>,
) -> Result<Vec<ScenePair>> {
    let cubes = generate_toy_scenes(spec, count)?;
    let config = DatasetConfig {
        cubes: (0..count).map(|i| format!("scene_{i:04}.hsb")).collect(),
        source,
        seed: spec.seed,
    };
    let manifest = assemble_dataset(&config)?;
    cubes
        .into_par_iter()
        .zip(manifest.entries.into_par_iter())
        .enumerate()
        .map(|(i, (cube, e))| {
            let sens = e.sensitivity.resolve(cameras)?;
            let mut p = ScenePair::new(i, cube, sens, e.split)?;
            p.label = e.sensitivity.camera_index();
            Ok(p)
        })
        .collect()
}

pub fn by_split(pairs: &[ScenePair], split: Split) -> Vec<&ScenePair> {
    pairs.iter().filter(|p| p.split == split).collect()
}

/// Training samples from `patch x patch` tiles of each pair.
pub fn estimator_samples<T: Real>(
    pairs: &[&ScenePair],
    patch: usize,
) -> Result<Vec<EstimatorSample<T>>> {
    let mut out = Vec::new();
    for p in pairs {
        for t in extract_patches(&p.cube, &p.rgb, patch, patch)? {
            out.push(EstimatorSample::new(&t.cube, &p.sens, &t.rgb)?);
        }
    }
    Ok(out)
}

/// Like [`estimator_samples`] but every patch is rendered under `draws`
/// fresh sensitivities from the continuous family instead of the pair's own.
pub fn resampled_estimator_samples<T: Real>(
    pairs: &[&ScenePair],
    patch: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<EstimatorSample<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let grid = WavelengthGrid::default();
    let mut out = Vec::new();
    for p in pairs {
        for t in extract_patches(&p.cube, &p.rgb, patch, patch)? {
            for _ in 0..draws {
                let sens = evaluate_gmm(&sample_continuous(rng.random()), grid)?;
                let rgb = render_rgb(&t.cube, &sens)?;
                out.push(EstimatorSample::new(&t.cube, &sens, &rgb)?);
            }
        }
    }
    Ok(out)
}

/// Mean reconstructed-RGB RMSE of `estimate(pair)` over `pairs`.
pub fn mean_rgb_rmse<F>(pairs: &[&ScenePair], estimate: F) -> Result<f64>
where
    F: Fn(&ScenePair) -> Result<SensitivityMatrix> + Sync,
{
    let v = pairs
        .par_iter()
        .map(|p| {
            reconstructed_rgb_rmse(
                &FlattenedScene::from_images(&p.cube, &p.rgb)?,
                &estimate(p)?,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
}

/// Entrywise mean of a list of sensitivities.
pub fn mean_sensitivity(list: &[&SensitivityMatrix]) -> Result<SensitivityMatrix> {
    let first = list
        .first()
        .ok_or_else(|| Error::Data("no sensitivities to average".into()))?;
    let mut acc = vec![0.0; first.values().len()];
    for s in list {
        for (a, v) in acc.iter_mut().zip(s.values()) {
            *a += v;
        }
    }
    let n = list.len() as f64;
    SensitivityMatrix::new(*first.grid(), acc.into_iter().map(|v| v / n).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorExperiment {
    pub scenes: ToySceneSpec,
    pub scene_count: usize,
    /// Hidden-width base of the trunk (32 gives the full network).
    pub width_base: usize,
    /// Sensitivities drawn per training patch.
    pub draws: usize,
    pub training: TrainingConfig,
}

impl Default for EstimatorExperiment {
    fn default() -> Self {
        EstimatorExperiment {
            scenes: ToySceneSpec::default(),
            scene_count: 200,
            width_base: 8,
            draws: 4,
            training: TrainingConfig {
                epochs: 30,
                patch_size: 64,
                ..TrainingConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub untrained_rmse: f64,
    pub mean_sensitivity_rmse: f64,
    pub trained_rmse: f64,
    pub outcome: TrainOutcome,
}

/// Trains an estimator on continuous-family pairs and scores it on the
/// validation scenes against the untrained network and the mean training
/// sensitivity.
pub fn run_estimator_experiment(
    exp: &EstimatorExperiment,
    pairs: &[ScenePair],
) -> Result<(EstimatorNet<f32>, EstimatorResult)> {
    let train = by_split(pairs, Split::Train);
    let val = by_split(pairs, Split::Validation);
    let samples = resampled_estimator_samples(
        &train,
        exp.training.patch_size,
        exp.draws,
        exp.training.seed,
    )?;
    let mut net = EstimatorNet::new(
        EstimatorConfig::scaled(WavelengthGrid::default().count, exp.width_base),
        exp.training.seed,
    )?;
    let untrained_rmse = mean_rgb_rmse(&val, |p| net.estimate(&p.rgb))?;
    let mean_s = mean_sensitivity(&train.iter().map(|p| &p.sens).collect::<Vec<_>>())?;
    let mean_sensitivity_rmse = mean_rgb_rmse(&val, |_| Ok(mean_s.clone()))?;

    let outcome = train_estimator_params(&mut net, &samples, &val, &exp.training)?;
    let trained_rmse = mean_rgb_rmse(&val, |p| net.estimate(&p.rgb))?;
    Ok((
        net,
        EstimatorResult {
            untrained_rmse,
            mean_sensitivity_rmse,
            trained_rmse,
            outcome,
        },
    ))
}

/// Trains `net` in place on `samples`, keeping the parameters with the
/// lowest reconstructed-RGB RMSE on the full `val` scenes.
pub fn train_estimator_params<T: Real>(
    net: &mut EstimatorNet<T>,
    samples: &[EstimatorSample<T>],
    val: &[&ScenePair],
    training: &TrainingConfig,
) -> Result<TrainOutcome> {
    let weights = training.loss_weights;
    let mut params = std::mem::take(&mut net.params);
    let val_inputs: Vec<(Tensor<T>, &ScenePair)> =
        val.iter().map(|p| (p.rgb.to_tensor(), *p)).collect();
    let outcome = {
        let arch = &*net;
        fit(
            &mut params,
            samples,
            &val_inputs,
            training,
            |tape, p, s| Ok(arch.loss(tape, p, s, &weights)?.0),
            |p: &ParamSet<T>, (x, pair)| {
                let s = estimate_with(arch, p, x)?;
                reconstructed_rgb_rmse(&FlattenedScene::from_images(&pair.cube, &pair.rgb)?, &s)
            },
        )
    };
    net.params = params;
    outcome
}

fn estimate_with<T: Real>(
    net: &EstimatorNet<T>,
    params: &ParamSet<T>,
    x: &Tensor<T>,
) -> Result<SensitivityMatrix> {
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let s = net.graph(&mut tape, params, xv)?;
    let flat: Vec<f64> = tape.value(s).data().iter().map(|v| v.to_f64()).collect();
    SensitivityMatrix::from_channel_major(net.config.grid()?, &flat)
}

/// Trains `net` in place on labelled images, keeping the parameters with
/// the lowest mean cross-entropy on `val`.
pub fn train_classifier_params<T: Real>(
    net: &mut ClassifierNet<T>,
    samples: &[(Tensor<T>, usize)],
    val: &[(Tensor<T>, usize)],
    training: &TrainingConfig,
) -> Result<TrainOutcome> {
    let mut params = std::mem::take(&mut net.params);
    let outcome = {
        let arch = &*net;
        fit(
            &mut params,
            samples,
            val,
            training,
            |tape, p, (x, label)| arch.loss(tape, p, x, *label),
            |p, (x, label)| {
                let mut tape = Tape::inference();
                let l = arch.loss(&mut tape, p, x, *label)?;
                Ok(tape.value(l).data()[0].to_f64())
            },
        )
    };
    net.params = params;
    outcome
}

/// One training tile for a reconstruction model. The network input is built
/// from `rgb` and `sens` when the loss is evaluated.
#[derive(Clone, Debug)]
pub struct ReconTile<T> {
    pub rgb: RgbImage,
    pub sens: SensitivityMatrix,
    pub target: Tensor<T>,
}

/// Tiles of each pair, each rendered under the sensitivities that `pick`
/// returns for it.
pub fn recon_tiles<T: Real, F>(
    pairs: &[&ScenePair],
    patch: usize,
    mut pick: F,
) -> Result<Vec<ReconTile<T>>>
where
    F: FnMut(&ScenePair) -> Result<Vec<SensitivityMatrix>>,
{
    let mut out = Vec::new();
    for p in pairs {
        for t in extract_patches(&p.cube, &p.rgb, patch, patch)? {
            let target = t.cube.to_tensor();
            for sens in pick(p)? {
                out.push(ReconTile {
                    rgb: render_rgb(&t.cube, &sens)?,
                    sens,
                    target: target.clone(),
                });
            }
        }
    }
    Ok(out)
}

fn recon_forward<T: Real>(
    net: &ReconstructionNet<T>,
    params: &ParamSet<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let y = net.graph(&mut tape, params, xv)?;
    Ok(tape.take_value(y))
}

/// Spectral RMSE of a network output against the ground-truth cube.
pub fn cube_rmse<T: Real>(cube: &SpectralCube, out: &Tensor<T>) -> Result<f64> {
    let est = SpectralCube::from_tensor(out, *cube.grid())?;
    rmse(cube.values(), est.values())
}

/// A validation or test case: the image, the sensitivity fed to a
/// conditional model, and the true cube.
#[derive(Clone, Debug)]
pub struct ReconCase {
    pub rgb: RgbImage,
    pub sens: SensitivityMatrix,
    pub cube: SpectralCube,
}

impl ReconCase {
    pub fn from_pair(p: &ScenePair) -> Self {
        ReconCase {
            rgb: p.rgb.clone(),
            sens: p.sens.clone(),
            cube: p.cube.clone(),
        }
    }

    /// The same scene rendered under `sens`.
    pub fn rendered(p: &ScenePair, sens: &SensitivityMatrix) -> Result<Self> {
        Ok(ReconCase {
            rgb: render_rgb(&p.cube, sens)?,
            sens: sens.clone(),
            cube: p.cube.clone(),
        })
    }
}

/// Trains a reconstruction network of the given mode on `tiles`, keeping
/// the parameters with the lowest mean spectral RMSE on `val`.
pub fn train_reconstruction<T: Real>(
    mode: ReconMode,
    width: usize,
    tiles: &[ReconTile<T>],
    val: &[ReconCase],
    training: &TrainingConfig,
) -> Result<(ReconstructionNet<T>, TrainOutcome)> {
    let bands = WavelengthGrid::default().count;
    let mut net =
        ReconstructionNet::new(ReconstructionConfig::new(mode, bands, width), training.seed)?;
    let mut params = std::mem::take(&mut net.params);
    let outcome = {
        let arch = &net;
        fit(
            &mut params,
            tiles,
            val,
            training,
            |tape, p, t: &ReconTile<T>| {
                let sample = ReconSample {
                    input: arch.input_for(&t.rgb, Some(&t.sens))?,
                    target: t.target.clone(),
                };
                arch.loss(tape, p, &sample)
            },
            |p, c: &ReconCase| {
                cube_rmse(
                    &c.cube,
                    &recon_forward(arch, p, &arch.input_for(&c.rgb, Some(&c.sens))?)?,
                )
            },
        )?
    };
    net.params = params;
    Ok((net, outcome))
}

/// Mean spectral RMSE of `net` over `cases`. Conditional models are fed
/// `sens(case)`.
pub fn mean_cube_rmse<T: Real, F>(
    net: &ReconstructionNet<T>,
    cases: &[ReconCase],
    sens: F,
) -> Result<f64>
where
    F: Fn(&ReconCase) -> Result<SensitivityMatrix> + Sync,
{
    let v = cases
        .par_iter()
        .map(|c| {
            let s = sens(c)?;
            cube_rmse(
                &c.cube,
                &net.forward_tensor(&net.input_for(&c.rgb, Some(&s))?)?,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconExperiment {
    /// Feature width of the reconstruction networks.
    pub width: usize,
    /// Continuous sensitivities drawn per training tile.
    pub draws: usize,
    /// Share of conditional training tiles whose sensitivity channels hold
    /// the estimator's output instead of the true sensitivity.
    pub estimated_fraction: f64,
    pub training: TrainingConfig,
}

impl Default for ReconExperiment {
    fn default() -> Self {
        ReconExperiment {
            width: 16,
            draws: 1,
            estimated_fraction: 0.5,
            training: TrainingConfig {
                epochs: 20,
                optimizer: Optimizer::adam(3e-3),
                ..TrainingConfig::default()
            },
        }
    }
}

/// Test spectral RMSE of the three ways to reconstruct from an image of
/// unknown sensitivity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditioningResult {
    pub generic: f64,
    pub conditional_true: f64,
    pub conditional_estimated: f64,
}

/// Trains generic and conditional models on continuous-family pairs and
/// scores them on the test split. The conditional model is fed either the
/// true sensitivity or the one `estimator` infers from the image.
pub fn run_conditioning_experiment(
    exp: &ReconExperiment,
    pairs: &[ScenePair],
    estimator: &EstimatorNet<f32>,
) -> Result<(
    ReconstructionNet<f32>,
    ReconstructionNet<f32>,
    ConditioningResult,
)> {
    let train = by_split(pairs, Split::Train);
    let val: Vec<ReconCase> = by_split(pairs, Split::Validation)
        .into_iter()
        .map(ReconCase::from_pair)
        .collect();
    let test: Vec<ReconCase> = by_split(pairs, Split::Test)
        .into_iter()
        .map(ReconCase::from_pair)
        .collect();
    let grid = WavelengthGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(exp.training.seed);
    rng.set_stream(3);
    let mut tiles = Vec::new();
    let mut mixed = Vec::new();
    for p in &train {
        let mut sens = vec![p.sens.clone()];
        for _ in 1..exp.draws {
            sens.push(evaluate_gmm(&sample_continuous(rng.random()), grid)?);
        }
        let estimates = sens
            .iter()
            .map(|s| estimator.estimate(&render_rgb(&p.cube, s)?))
            .collect::<Result<Vec<_>>>()?;
        for t in extract_patches(
            &p.cube,
            &p.rgb,
            exp.training.patch_size,
            exp.training.patch_size,
        )? {
            let target: Tensor<f32> = t.cube.to_tensor();
            for (s, e) in sens.iter().zip(&estimates) {
                let rgb = render_rgb(&t.cube, s)?;
                let cond = if rng.random_bool(exp.estimated_fraction) {
                    e
                } else {
                    s
                };
                mixed.push(ReconTile {
                    rgb: rgb.clone(),
                    sens: cond.clone(),
                    target: target.clone(),
                });
                tiles.push(ReconTile {
                    rgb,
                    sens: s.clone(),
                    target: target.clone(),
                });
            }
        }
    }
    let (generic, _) =
        train_reconstruction::<f32>(ReconMode::Generic, exp.width, &tiles, &val, &exp.training)?;
    let (conditional, _) = train_reconstruction(
        ReconMode::Conditional,
        exp.width,
        &mixed,
        &val,
        &exp.training,
    )?;
    let result = ConditioningResult {
        generic: mean_cube_rmse(&generic, &test, |c| Ok(c.sens.clone()))?,
        conditional_true: mean_cube_rmse(&conditional, &test, |c| Ok(c.sens.clone()))?,
        conditional_estimated: mean_cube_rmse(&conditional, &test, |c| estimator.estimate(&c.rgb))?,
    };
    Ok((generic, conditional, result))
}

/// Single-pass and self-ensembled mean spectral RMSE of `net` on `cases`.
pub fn ensemble_comparison<T: Real>(
    net: &ReconstructionNet<T>,
    cases: &[ReconCase],
) -> Result<(f64, f64)> {
    let v = cases
        .par_iter()
        .map(|c| {
            let x = net.input_for(&c.rgb, Some(&c.sens))?;
            let single = cube_rmse(&c.cube, &net.forward_tensor(&x)?)?;
            let ens = cube_rmse(
                &c.cube,
                &self_ensemble_predict(&x, |t| net.forward_tensor(t))?,
            )?;
            Ok((single, ens))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let n = v.len().max(1) as f64;
    Ok((
        v.iter().map(|p| p.0).sum::<f64>() / n,
        v.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepExperiment {
    pub scenes: ToySceneSpec,
    pub scene_count: usize,
    /// Nested camera counts, taken as prefixes of a seeded shuffle of the
    /// camera set.
    pub counts: Vec<usize>,
    pub camera_seed: u64,
    pub width: usize,
    /// As in [`ReconExperiment`].
    pub estimated_fraction: f64,
    pub classifier_base: usize,
    pub training: TrainingConfig,
    pub classifier_training: TrainingConfig,
}

impl Default for SweepExperiment {
    fn default() -> Self {
        SweepExperiment {
            scenes: ToySceneSpec {
                seed: 1,
                ..ToySceneSpec::default()
            },
            scene_count: 100,
            counts: vec![2, 4, 8],
            camera_seed: 0,
            width: 16,
            estimated_fraction: 0.5,
            classifier_base: 8,
            training: TrainingConfig {
                epochs: 15,
                optimizer: Optimizer::adam(3e-3),
                ..TrainingConfig::default()
            },
            classifier_training: TrainingConfig {
                epochs: 15,
                optimizer: Optimizer::adam(3e-4),
                ..TrainingConfig::default()
            },
        }
    }
}

/// Test results for one camera count. RMSE values are spectral and averaged
/// over every test scene rendered under every one of the `cameras` cameras.
/// `conditional` is fed estimated sensitivities, `conditional_true` the
/// true ones.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub cameras: usize,
    pub oracle: f64,
    pub dispatched: f64,
    pub generic: f64,
    pub conditional: f64,
    pub conditional_true: f64,
    pub accuracy: f64,
}

impl SweepPoint {
    pub const CSV_HEADER: &'static str =
        "cameras,oracle,dispatched,generic,conditional,conditional_true,accuracy";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.cameras,
            self.oracle,
            self.dispatched,
            self.generic,
            self.conditional,
            self.conditional_true,
            self.accuracy
        )
    }
}

/// Range of a curve, used to compare how flat curves are.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Sweeps the number of cameras. Specialized models are trained once per
/// camera and shared by every count; classifier, generic and conditional
/// models are retrained for each count. `estimator` supplies the
/// sensitivities of the conditional model.
pub fn run_camera_sweep(
    exp: &SweepExperiment,
    cameras: &CameraSensitivitySet,
    estimator: &EstimatorNet<f32>,
) -> Result<Vec<SweepPoint>> {
    let max_c = exp.counts.iter().copied().max().unwrap_or(0);
    if max_c == 0 || max_c > cameras.len() {
        return Err(Error::Configuration(format!(
            "camera counts must lie in 1..={}, got {:?}",
            cameras.len(),
            exp.counts
        )));
    }
    let mut order: Vec<usize> = (0..cameras.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(exp.camera_seed));
    let chosen: Vec<SensitivityMatrix> = order[..max_c]
        .iter()
        .map(|&i| cameras.functions[i].clone())
        .collect();
    log::info!(
        "cameras {:?}",
        order[..max_c]
            .iter()
            .map(|&i| &cameras.names[i])
            .collect::<Vec<_>>()
    );

    let pairs = toy_pairs(
        &exp.scenes,
        exp.scene_count,
        SensitivitySource::Continuous,
        None,
    )?;
    let train = by_split(&pairs, Split::Train);
    let val = by_split(&pairs, Split::Validation);
    let test = by_split(&pairs, Split::Test);
    let under =
        |scenes: &[&ScenePair], cams: &[SensitivityMatrix]| -> Result<Vec<Vec<ReconCase>>> {
            cams.iter()
                .map(|s| scenes.iter().map(|p| ReconCase::rendered(p, s)).collect())
                .collect()
        };
    let val_cases = under(&val, &chosen)?;
    let test_cases = under(&test, &chosen)?;
    let train_estimates = train
        .par_iter()
        .map(|p| {
            chosen
                .iter()
                .map(|s| estimator.estimate(&render_rgb(&p.cube, s)?))
                .collect()
        })
        .collect::<Result<Vec<Vec<SensitivityMatrix>>>>()?;

    let mut specialized = Vec::with_capacity(max_c);
    for (j, s) in chosen.iter().enumerate() {
        log::info!("specialized model {j}");
        let tiles = recon_tiles(&train, exp.training.patch_size, |_| Ok(vec![s.clone()]))?;
        specialized.push(
            train_reconstruction::<f32>(
                ReconMode::Generic,
                exp.width,
                &tiles,
                &val_cases[j],
                &exp.training,
            )?
            .0,
        );
    }

    let mut points = Vec::new();
    for &c in &exp.counts {
        let cams = &chosen[..c];
        let flat = |cases: &[Vec<ReconCase>]| -> Vec<ReconCase> {
            cases[..c].iter().flatten().cloned().collect()
        };
        let labeled = |cases: &[Vec<ReconCase>]| -> Vec<(Tensor<f32>, usize)> {
            cases[..c]
                .iter()
                .enumerate()
                .flat_map(|(j, v)| v.iter().map(move |k| (k.rgb.to_tensor(), j)))
                .collect()
        };
        let (val_c, test_c) = (flat(&val_cases), flat(&test_cases));

        let mut rng = ChaCha8Rng::seed_from_u64(exp.training.seed);
        rng.set_stream(4);
        let mut tiles = Vec::new();
        let mut mixed = Vec::new();
        for (p, estimates) in train.iter().zip(&train_estimates) {
            for t in extract_patches(
                &p.cube,
                &p.rgb,
                exp.training.patch_size,
                exp.training.patch_size,
            )? {
                let j = rng.random_range(0..c);
                let rgb = render_rgb(&t.cube, &cams[j])?;
                let target: Tensor<f32> = t.cube.to_tensor();
                let cond = if rng.random_bool(exp.estimated_fraction) {
                    &estimates[j]
                } else {
                    &cams[j]
                };
                mixed.push(ReconTile {
                    rgb: rgb.clone(),
                    sens: cond.clone(),
                    target: target.clone(),
                });
                tiles.push(ReconTile {
                    rgb,
                    sens: cams[j].clone(),
                    target,
                });
            }
        }
        log::info!("{c} cameras: generic");
        let (generic, _) = train_reconstruction::<f32>(
            ReconMode::Generic,
            exp.width,
            &tiles,
            &val_c,
            &exp.training,
        )?;
        log::info!("{c} cameras: conditional");
        let (conditional, _) = train_reconstruction(
            ReconMode::Conditional,
            exp.width,
            &mixed,
            &val_c,
            &exp.training,
        )?;

        log::info!("{c} cameras: classifier");
        let mut class_tiles = Vec::new();
        for p in &train {
            for t in extract_patches(
                &p.cube,
                &p.rgb,
                exp.classifier_training.patch_size,
                exp.classifier_training.patch_size,
            )? {
                for (j, s) in cams.iter().enumerate() {
                    class_tiles.push((render_rgb(&t.cube, s)?.to_tensor::<f32>(), j));
                }
            }
        }
        let mut classifier = ClassifierNet::<f32>::new(
            ClassifierConfig::scaled(c, exp.classifier_base),
            exp.classifier_training.seed,
        )?;
        train_classifier_params(
            &mut classifier,
            &class_tiles,
            &labeled(&val_cases),
            &exp.classifier_training,
        )?;

        let test_labeled = labeled(&test_cases);
        let results = test_c
            .par_iter()
            .zip(test_labeled.par_iter())
            .map(|(case, (x, label))| {
                let predicted = classifier.predict_tensor(x)?;
                let oracle = cube_rmse(&case.cube, &specialized[*label].forward_tensor(x)?)?;
                let dispatched = cube_rmse(&case.cube, &specialized[predicted].forward_tensor(x)?)?;
                Ok((oracle, dispatched, (predicted == *label) as u8 as f64))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = results.len() as f64;
        let point = SweepPoint {
            cameras: c,
            oracle: results.iter().map(|r| r.0).sum::<f64>() / n,
            dispatched: results.iter().map(|r| r.1).sum::<f64>() / n,
            generic: mean_cube_rmse(&generic, &test_c, |k| Ok(k.sens.clone()))?,
            conditional: mean_cube_rmse(&conditional, &test_c, |k| estimator.estimate(&k.rgb))?,
            conditional_true: mean_cube_rmse(&conditional, &test_c, |k| Ok(k.sens.clone()))?,
            accuracy: results.iter().map(|r| r.2).sum::<f64>() / n,
        };
        log::info!("{}", point.csv_row());
        points.push(point);
    }
    Ok(points)
}
