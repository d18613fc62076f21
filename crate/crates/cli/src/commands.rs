use std::fs;
use std::path::{Path, PathBuf};

use hsrecon::autodiff::gradcheck::primitive_cases;
use hsrecon::autodiff::{Optimizer, Real, Tensor};
use hsrecon::data::{
    assemble_dataset, cube_to_rgb, extract_patches, generate_toy_scenes, load_hsb, load_pairs,
    read_manifest, rgb_to_cube, save_hsb, write_manifest, write_png, DatasetConfig, ScenePair,
    SensitivityRef, SensitivitySource, Split, ToySceneSpec,
};
use hsrecon::estimation::{estimate_from_pair, reconstructed_rgb_rmse};
use hsrecon::experiments::{
    by_split, cube_rmse, estimator_samples, recon_tiles, resampled_estimator_samples,
    run_camera_sweep, train_classifier_params, train_estimator_params, train_reconstruction,
    ReconCase, SweepExperiment, SweepPoint,
};
use hsrecon::metrics::cube_report;
use hsrecon::nets::gradcheck::network_cases;
use hsrecon::nets::{
    self_ensemble_predict, specialized_select, ClassifierConfig, ClassifierNet, EstimatorConfig,
    EstimatorNet, ReconMode, ReconstructionNet, TrainOutcome, TrainingConfig,
};
use hsrecon::sensitivity::{
    default_camera_peak, evaluate_gmm, export_samples, load_camera_set, load_fixture_cameras,
    read_camera_tables, sample_continuous, sensitivity_from_csv, sensitivity_to_csv,
};
use hsrecon::{
    CameraSensitivitySet, Error, FlattenedScene, LossWeights, Result, SensitivityMatrix,
    SpectralCube, WavelengthGrid,
};

use crate::args::*;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn run(cli: &Cli) -> Result<()> {
    log::info!("running {}", cli.command.name());
    match (&cli.command, cli.precision) {
        (Command::Render(a), _) => render(a),
        (Command::Sample(a), _) => sample(a, cli.seed),
        (Command::Estimate(a), Precision::F32) => estimate::<f32>(a),
        (Command::Estimate(a), Precision::F64) => estimate::<f64>(a),
        (Command::Classify(a), Precision::F32) => classify::<f32>(a),
        (Command::Classify(a), Precision::F64) => classify::<f64>(a),
        (Command::Train(a), Precision::F32) => train::<f32>(a, cli.seed),
        (Command::Train(a), Precision::F64) => train::<f64>(a, cli.seed),
        (Command::Reconstruct(a), Precision::F32) => reconstruct::<f32>(a),
        (Command::Reconstruct(a), Precision::F64) => reconstruct::<f64>(a),
        (Command::Eval(a), _) => eval(a, cli.seed),
        (Command::Gradcheck(a), _) => gradcheck(a, cli.seed),
        (Command::GenData(a), _) => gen_data(a, cli.seed),
    }
}

fn cameras(dirs: &[PathBuf]) -> Result<CameraSensitivitySet> {
    if dirs.is_empty() {
        load_fixture_cameras()
    } else {
        load_camera_set(
            &read_camera_tables(dirs)?,
            WavelengthGrid::default(),
            default_camera_peak(),
        )
    }
}

fn read_sensitivity(path: &Path) -> Result<SensitivityMatrix> {
    let name = path.display().to_string();
    sensitivity_from_csv(&name, &fs::read_to_string(path)?)
}

fn load_image(path: &Path) -> Result<hsrecon::RgbImage> {
    cube_to_rgb(&load_hsb(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn render(a: &RenderArgs) -> Result<()> {
    let cube = load_hsb(&a.hsi)?;
    let sens = read_sensitivity(&a.sens)?;
    if sens.grid() != cube.grid() {
        return Err(Error::Shape(format!(
            "sensitivity grid {:?} does not match the cube grid {:?}",
            sens.grid(),
            cube.grid()
        )));
    }
    let img = hsrecon::spectral::render_rgb(&cube, &sens)?;
    if let Some(out) = &a.out {
        write_png(out, &img, a.gamma)?;
    }
    if let Some(out) = &a.rgb_out {
        save_hsb(out, &rgb_to_cube(&img)?)?;
    }
    Ok(())
}

fn sample(a: &SampleArgs, seed: u64) -> Result<()> {
    let json = a.out.extension().is_some_and(|e| e == "json");
    if let Some(i) = a.camera {
        let set = load_fixture_cameras()?;
        let s = set.functions.get(i).ok_or_else(|| {
            Error::Configuration(format!("camera {i} out of range (0..{})", set.len()))
        })?;
        println!("{}", set.names[i]);
        return write_text(&a.out, &sensitivity_to_csv(s));
    }
    if json {
        let seeds: Vec<u64> = (0..a.count as u64).map(|k| seed.wrapping_add(k)).collect();
        return write_text(&a.out, &export_samples(&seeds, WavelengthGrid::default())?);
    }
    if a.count != 1 {
        return Err(Error::Configuration(
            "a CSV output holds one sensitivity; use a .json path for --count > 1".into(),
        ));
    }
    let s = evaluate_gmm(&sample_continuous(seed), WavelengthGrid::default())?;
    write_text(&a.out, &sensitivity_to_csv(&s))
}

fn estimate<T: Real>(a: &EstimateArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let cube = a.hsi.as_deref().map(load_hsb).transpose()?;
    let s = match a.method {
        EstimateMethod::Tikhonov => {
            let cube = cube
                .as_ref()
                .ok_or_else(|| Error::Configuration("the Tikhonov solver needs --hsi".into()))?;
            estimate_from_pair(cube, &img, a.gamma)?
        }
        EstimateMethod::Network => {
            let model = a
                .model
                .as_deref()
                .ok_or_else(|| Error::Configuration("network estimation needs --model".into()))?;
            EstimatorNet::<T>::load(model)?.estimate(&img)?
        }
    };
    if let Some(cube) = &cube {
        let rmse = reconstructed_rgb_rmse(&FlattenedScene::from_images(cube, &img)?, &s)?;
        println!("{}", serde_json::json!({ "rgb_rmse": rmse }));
    }
    write_text(&a.out, &sensitivity_to_csv(&s))
}

fn classify<T: Real>(a: &ClassifyArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let net = ClassifierNet::<T>::load(&a.model)?;
    let p = net.probabilities(&img)?;
    let class = net.predict(&img)?;
    let text =
        serde_json::to_string_pretty(&serde_json::json!({ "class": class, "probabilities": p }))?;
    match &a.out {
        Some(out) => write_text(out, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_dataset(dir: &Path, camera_dirs: &[PathBuf]) -> Result<Vec<ScenePair>> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let needs_cameras = manifest
        .entries
        .iter()
        .any(|e| matches!(e.sensitivity, SensitivityRef::Camera { .. }));
    let set = if needs_cameras {
        Some(cameras(camera_dirs)?)
    } else {
        None
    };
    load_pairs(&manifest, dir, set.as_ref())
}

fn train<T: Real>(a: &TrainArgs, seed: u64) -> Result<()> {
    let pairs = load_dataset(&a.data, &a.camera_dir)?;
    let train = by_split(&pairs, Split::Train);
    let val = by_split(&pairs, Split::Validation);
    let [image, label, smoothness] = a.loss_weights[..] else {
        return Err(Error::Configuration(
            "--loss-weights takes three values".into(),
        ));
    };
    let cfg = TrainingConfig {
        loss_weights: LossWeights::new(image, label, smoothness)?,
        optimizer: Optimizer::adam(a.lr),
        batch_size: a.batch,
        patch_size: a.patch,
        epochs: a.epochs,
        seed,
        ..TrainingConfig::default()
    };
    cfg.validate()?;
    let bands = pairs
        .first()
        .map(|p| p.cube.bands())
        .ok_or_else(|| Error::Data("dataset is empty".into()))?;
    let outcome: TrainOutcome = match a.kind {
        NetKind::Estimator => {
            let samples = if a.draws <= 1 {
                estimator_samples::<T>(&train, a.patch)?
            } else {
                resampled_estimator_samples::<T>(&train, a.patch, a.draws, seed)?
            };
            let mut net =
                EstimatorNet::<T>::new(EstimatorConfig::scaled(bands, a.width.unwrap_or(8)), seed)?;
            let o = train_estimator_params(&mut net, &samples, &val, &cfg)?;
            net.save(&a.out)?;
            o
        }
        NetKind::Classifier => {
            let label = |p: &ScenePair| {
                p.label.ok_or_else(|| {
                    Error::Data("classifier training needs a camera-labelled dataset".into())
                })
            };
            let classes = pairs
                .iter()
                .map(|p| label(p).map(|l| l + 1))
                .try_fold(0, |m, l| l.map(|l| m.max(l)))?;
            let mut samples = Vec::new();
            for p in &train {
                for t in extract_patches(&p.cube, &p.rgb, a.patch, a.patch)? {
                    samples.push((t.rgb.to_tensor::<T>(), label(p)?));
                }
            }
            let val_set = val
                .iter()
                .map(|p| Ok((p.rgb.to_tensor::<T>(), label(p)?)))
                .collect::<Result<Vec<(Tensor<T>, usize)>>>()?;
            let mut net = ClassifierNet::<T>::new(
                ClassifierConfig::scaled(classes, a.width.unwrap_or(8)),
                seed,
            )?;
            let o = train_classifier_params(&mut net, &samples, &val_set, &cfg)?;
            net.save(&a.out)?;
            o
        }
        NetKind::Reconstruction => {
            let mode = match a.mode {
                ModeArg::Generic => ReconMode::Generic,
                ModeArg::Conditional => ReconMode::Conditional,
                ModeArg::Specialized => ReconMode::Specialized,
            };
            let tiles = recon_tiles::<T, _>(&train, a.patch, |p| Ok(vec![p.sens.clone()]))?;
            let val_cases: Vec<ReconCase> = val.iter().map(|p| ReconCase::from_pair(p)).collect();
            let (net, o) =
                train_reconstruction(mode, a.width.unwrap_or(16), &tiles, &val_cases, &cfg)?;
            net.save(&a.out)?;
            o
        }
    };
    if let Some(log) = &a.log {
        outcome.write_csv(log)?;
    }
    println!(
        "{}",
        serde_json::json!({ "best_epoch": outcome.best_epoch, "best_val": outcome.best_val })
    );
    Ok(())
}

fn reconstruct<T: Real>(a: &ReconstructArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let need = |p: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| Error::Configuration(format!("{:?} mode needs --{flag}", a.mode)))
    };
    let cube = match a.mode {
        ModeArg::Specialized => {
            let classifier = ClassifierNet::<T>::load(&need(&a.classifier, "classifier")?)?;
            let models = a
                .models
                .iter()
                .map(|m| ReconstructionNet::<T>::load(m))
                .collect::<Result<Vec<_>>>()?;
            if models
                .iter()
                .any(|m| m.config.mode == ReconMode::Conditional)
            {
                return Err(Error::Configuration(
                    "specialized models must not be conditional".into(),
                ));
            }
            if a.ensemble {
                let (class, _) = specialized_select(&img, &classifier, &models)?;
                println!("{}", serde_json::json!({ "class": class }));
                run_model(&models[class], &img, None, true)?
            } else {
                let (class, cube) = specialized_select(&img, &classifier, &models)?;
                println!("{}", serde_json::json!({ "class": class }));
                cube
            }
        }
        ModeArg::Generic => {
            let net = ReconstructionNet::<T>::load(&need(&a.model, "model")?)?;
            if net.config.mode == ReconMode::Conditional {
                return Err(Error::Configuration(
                    "the model is conditional; use --mode conditional".into(),
                ));
            }
            run_model(&net, &img, None, a.ensemble)?
        }
        ModeArg::Conditional => {
            let net = ReconstructionNet::<T>::load(&need(&a.model, "model")?)?;
            if net.config.mode != ReconMode::Conditional {
                return Err(Error::Configuration(format!(
                    "the model is {:?}, not conditional",
                    net.config.mode
                )));
            }
            let sens = match a.sens.as_deref() {
                Some("auto") => {
                    EstimatorNet::<T>::load(&need(&a.estimator, "estimator")?)?.estimate(&img)?
                }
                Some(path) => read_sensitivity(Path::new(path))?,
                None => {
                    return Err(Error::Configuration(
                        "conditional mode needs --sens <csv> or --sens auto".into(),
                    ))
                }
            };
            run_model(&net, &img, Some(&sens), a.ensemble)?
        }
    };
    save_hsb(&a.out, &cube)?;
    if let Some(gt) = &a.gt {
        let gt = load_hsb(gt)?;
        let rmse = cube_rmse::<f64>(&gt, &cube.to_tensor())?;
        println!("{}", serde_json::json!({ "rmse": rmse }));
    }
    Ok(())
}

fn run_model<T: Real>(
    net: &ReconstructionNet<T>,
    img: &hsrecon::RgbImage,
    sens: Option<&SensitivityMatrix>,
    ensemble: bool,
) -> Result<SpectralCube> {
    let x = net.input_for(img, sens)?;
    let y = if ensemble {
        self_ensemble_predict(&x, |t| net.forward_tensor(t))?
    } else {
        net.forward_tensor(&x)?
    };
    SpectralCube::from_tensor(&y, net.config.grid()?)
}

fn eval(a: &EvalArgs, seed: u64) -> Result<()> {
    if a.sweep {
        let base = SweepExperiment::default();
        let exp = SweepExperiment {
            scenes: ToySceneSpec {
                seed,
                ..base.scenes
            },
            scene_count: a.scenes,
            counts: a.counts.clone(),
            camera_seed: seed,
            width: a.width,
            training: TrainingConfig {
                epochs: a.epochs,
                seed,
                ..base.training.clone()
            },
            classifier_training: TrainingConfig {
                epochs: a.epochs,
                seed,
                ..base.classifier_training.clone()
            },
            ..base
        };
        let path = a
            .estimator
            .as_ref()
            .ok_or_else(|| Error::Configuration("--sweep needs --estimator".into()))?;
        let estimator = EstimatorNet::<f32>::load(path)?;
        let points = run_camera_sweep(&exp, &load_fixture_cameras()?, &estimator)?;
        let mut csv = format!("{}\n", SweepPoint::CSV_HEADER);
        for p in &points {
            csv.push_str(&p.csv_row());
            csv.push('\n');
        }
        return match &a.out {
            Some(out) => write_text(out, &csv),
            None => {
                print!("{csv}");
                Ok(())
            }
        };
    }
    let (Some(gt), Some(est)) = (&a.gt, &a.est) else {
        return Err(Error::Configuration(
            "eval needs --gt and --est, or --sweep".into(),
        ));
    };
    let report = cube_report(&load_hsb(gt)?, &load_hsb(est)?, a.data_range)?;
    match &a.out {
        Some(out) => write_text(out, &report.to_json()?),
        None => {
            println!("{}", report.to_json()?);
            Ok(())
        }
    }
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Result<()> {
    let mut total = 0;
    let mut failed = 0;
    for s in seed..seed + a.cases as u64 {
        let mut reports = primitive_cases(s)?;
        reports.extend(network_cases(s)?);
        for r in reports {
            total += 1;
            let ok = r.passed();
            if !ok {
                failed += 1;
            }
            println!(
                "{} seed={s} {} max_rel_error={:.3e} checked={} kinks={}",
                if ok { "PASS" } else { "FAIL" },
                r.name,
                r.max_rel_error,
                r.checked,
                r.skipped_kinks
            );
        }
    }
    println!("{} of {total} gradient checks passed", total - failed);
    if failed > 0 {
        return Err(Error::Contract(format!(
            "{failed} of {total} gradient checks failed"
        )));
    }
    Ok(())
}

fn gen_data(a: &GenDataArgs, seed: u64) -> Result<()> {
    let spec = ToySceneSpec {
        height: a.height,
        width: a.width,
        objects: a.objects,
        seed,
        ..ToySceneSpec::default()
    };
    let source = match a.source {
        SourceArg::Continuous => SensitivitySource::Continuous,
        SourceArg::Discrete => {
            let set = cameras(&a.camera_dir)?;
            let n = a.cameras.unwrap_or(set.len());
            if n == 0 || n > set.len() {
                return Err(Error::Configuration(format!(
                    "--cameras must lie in 1..={}",
                    set.len()
                )));
            }
            SensitivitySource::Discrete {
                cameras: set.names[..n].to_vec(),
            }
        }
        SourceArg::Single => SensitivitySource::Single {
            sensitivity: match a.camera {
                Some(index) => {
                    let set = cameras(&a.camera_dir)?;
                    let name = set.names.get(index).ok_or_else(|| {
                        Error::Configuration(format!("camera {index} out of range"))
                    })?;
                    SensitivityRef::Camera {
                        index,
                        name: name.clone(),
                    }
                }
                None => SensitivityRef::Continuous {
                    seed,
                    params: sample_continuous(seed),
                },
            },
        },
    };
    let cubes = generate_toy_scenes(&spec, a.count)?;
    let config = DatasetConfig {
        cubes: (0..a.count).map(|i| format!("scene_{i:04}.hsb")).collect(),
        source,
        seed,
    };
    let manifest = assemble_dataset(&config)?;
    fs::create_dir_all(&a.out)?;
    for (cube, name) in cubes.iter().zip(&config.cubes) {
        save_hsb(&a.out.join(name), cube)?;
    }
    write_manifest(&a.out.join(MANIFEST_FILE), &manifest)?;
    println!(
        "{}",
        serde_json::json!({ "scenes": a.count, "config_hash": manifest.config_hash })
    );
    Ok(())
}
