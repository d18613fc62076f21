use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::io::load_hsb;
use crate::error::{Error, Result};
use crate::sensitivity::{
    evaluate_gmm, sample_continuous, CameraSensitivitySet, GmmSensitivityParams,
};
use crate::spectral::{render_rgb, RgbImage, SensitivityMatrix, SpectralCube, WavelengthGrid};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    Continuous,
    Discrete,
    Single,
}

impl std::str::FromStr for SourceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(SourceMode::Continuous),
            "discrete" => Ok(SourceMode::Discrete),
            "single" => Ok(SourceMode::Single),
            other => Err(Error::Configuration(format!(
                "unknown sensitivity source '{other}', expected continuous, discrete or single"
            ))),
        }
    }
}

/// Where one entry's sensitivity comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensitivityRef {
    Continuous {
        seed: u64,
        params: GmmSensitivityParams,
    },
    Camera {
        index: usize,
        name: String,
    },
}

impl SensitivityRef {
    pub fn resolve(&self, cameras: Option<&CameraSensitivitySet>) -> Result<SensitivityMatrix> {
        match self {
            SensitivityRef::Continuous { params, .. } => {
                evaluate_gmm(params, WavelengthGrid::default())
            }
            SensitivityRef::Camera { index, name } => {
                let set = cameras.ok_or_else(|| {
                    Error::Configuration(format!(
                        "camera '{name}' referenced but no camera set loaded"
                    ))
                })?;
                match (set.names.get(*index), set.functions.get(*index)) {
                    (Some(n), Some(f)) if n == name => Ok(f.clone()),
                    _ => Err(Error::Data(format!(
                        "camera '{name}' not found at index {index}"
                    ))),
                }
            }
        }
    }

    /// Class label of a camera reference.
    pub fn camera_index(&self) -> Option<usize> {
        match self {
            SensitivityRef::Camera { index, .. } => Some(*index),
            SensitivityRef::Continuous { .. } => None,
        }
    }
}

/// Sensitivity pool used to pair scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum SensitivitySource {
    /// A fresh draw from the continuous family per scene.
    Continuous,
    /// Balanced assignment over the named cameras.
    Discrete { cameras: Vec<String> },
    /// Every scene shares one sensitivity.
    Single { sensitivity: SensitivityRef },
}

impl SensitivitySource {
    pub fn mode(&self) -> SourceMode {
        match self {
            SensitivitySource::Continuous => SourceMode::Continuous,
            SensitivitySource::Discrete { .. } => SourceMode::Discrete,
            SensitivitySource::Single { .. } => SourceMode::Single,
        }
    }

    pub fn discrete(set: &CameraSensitivitySet) -> Self {
        SensitivitySource::Discrete {
            cameras: set.names.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub cube: String,
    pub sensitivity: SensitivityRef,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub source_mode: SourceMode,
    pub entries: Vec<ManifestEntry>,
    pub config_hash: String,
}

/// Everything a manifest is a function of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub cubes: Vec<String>,
    pub source: SensitivitySource,
    pub seed: u64,
}

impl DatasetConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&(MANIFEST_VERSION, self)).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Scene-level 80/10/10 split: scenes are shuffled with `seed` and cut in
/// order into train, validation and test.
pub fn assign_splits(scenes: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..scenes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (scenes as f64 * 0.8).round() as usize;
    let n_val = (scenes as f64 * 0.1).round() as usize;
    let mut out = vec![Split::Test; scenes];
    for (rank, &scene) in order.iter().enumerate() {
        out[scene] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    out
}

/// Pairs every cube with a sensitivity and a split. The result depends only
/// on `config`; splits depend only on the cube count and seed, so manifests
/// built from the same cubes and seed with different sources share splits.
pub fn assemble_dataset(config: &DatasetConfig) -> Result<DatasetManifest> {
    let n = config.cubes.len();
    if n == 0 {
        return Err(Error::Data("dataset needs at least one cube".into()));
    }
    let splits = assign_splits(n, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let refs: Vec<SensitivityRef> = match &config.source {
        SensitivitySource::Continuous => (0..n)
            .map(|_| {
                let seed = rng.random::<u64>();
                SensitivityRef::Continuous {
                    seed,
                    params: sample_continuous(seed),
                }
            })
            .collect(),
        SensitivitySource::Discrete { cameras } => {
            if cameras.is_empty() {
                return Err(Error::Configuration(
                    "discrete source needs at least one camera".into(),
                ));
            }
            let mut slots: Vec<usize> = (0..n).map(|i| i % cameras.len()).collect();
            slots.shuffle(&mut rng);
            slots
                .into_iter()
                .map(|i| SensitivityRef::Camera {
                    index: i,
                    name: cameras[i].clone(),
                })
                .collect()
        }
        SensitivitySource::Single { sensitivity } => vec![sensitivity.clone(); n],
    };
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        seed: config.seed,
        source_mode: config.source.mode(),
        entries: config
            .cubes
            .iter()
            .zip(refs)
            .zip(splits)
            .map(|((cube, sensitivity), split)| ManifestEntry {
                cube: cube.clone(),
                sensitivity,
                split,
            })
            .collect(),
        config_hash: config.hash(),
    })
}

impl DatasetManifest {
    /// Checks the version, that `config` hashes to the stored value, and
    /// that every cube exists under `base`.
    pub fn check(&self, config: &DatasetConfig, base: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        if config.hash() != self.config_hash {
            return Err(Error::Data(
                "manifest hash does not match its configuration".into(),
            ));
        }
        for e in &self.entries {
            if !base.join(&e.cube).is_file() {
                return Err(Error::Data(format!("missing cube file {}", e.cube)));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &ManifestEntry)> {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.split == split)
    }
}

/// Writes via a temporary file and a rename, so readers never see a partial
/// manifest.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, serde_json::to_vec_pretty(manifest)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let m: DatasetManifest = serde_json::from_slice(&fs::read(path)?)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Data(format!(
            "unsupported manifest version {}",
            m.version
        )));
    }
    Ok(m)
}

/// A cube, its sensitivity and the rendered image.
#[derive(Clone, Debug)]
pub struct ScenePair {
    /// Entry index in the manifest; doubles as the scene id.
    pub scene: usize,
    pub cube: SpectralCube,
    pub sens: SensitivityMatrix,
    pub rgb: RgbImage,
    pub split: Split,
    /// Camera index for discrete and single-camera sources.
    pub label: Option<usize>,
}

impl ScenePair {
    pub fn new(
        scene: usize,
        cube: SpectralCube,
        sens: SensitivityMatrix,
        split: Split,
    ) -> Result<Self> {
        let rgb = render_rgb(&cube, &sens)?;
        Ok(ScenePair {
            scene,
            cube,
            sens,
            rgb,
            split,
            label: None,
        })
    }
}

/// Loads and renders every entry of `manifest`, resolving cube paths
/// against `base`.
pub fn load_pairs(
    manifest: &DatasetManifest,
    base: &Path,
    cameras: Option<&CameraSensitivitySet>,
) -> Result<Vec<ScenePair>> {
    manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let cube = load_hsb(&base.join(&e.cube))?;
            let sens = e.sensitivity.resolve(cameras)?;
            let mut pair = ScenePair::new(i, cube, sens, e.split)?;
            pair.label = e.sensitivity.camera_index();
            Ok(pair)
        })
        .collect()
}
