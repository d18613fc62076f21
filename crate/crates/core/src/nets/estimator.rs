use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Trunk, TrunkConfig};
use super::{open_checkpoint, save_checkpoint};
use crate::autodiff::{ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::estimation::LossWeights;
use crate::sensitivity::SmoothnessOperator;
use crate::spectral::{RgbImage, SensitivityMatrix, SpectralCube, WavelengthGrid};

pub const KIND: &str = "estimator";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub bands: usize,
    pub trunk: TrunkConfig,
}

impl EstimatorConfig {
    /// Widths `(32, 32, 32, 64, 64, 64, 128 x 5, 3d)`.
    pub fn full(bands: usize) -> Self {
        Self::scaled(bands, 32)
    }

    /// The same shape with every hidden width divided by `32 / base`.
    pub fn scaled(bands: usize, base: usize) -> Self {
        let mut widths = vec![base; 3];
        widths.extend([2 * base; 3]);
        widths.extend([4 * base; 5]);
        widths.push(3 * bands);
        EstimatorConfig {
            bands,
            trunk: TrunkConfig {
                widths,
                kernel: 3,
                pool: 2,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trunk.validate()?;
        if self.bands < 3 {
            return Err(Error::Configuration(
                "estimator needs at least 3 bands".into(),
            ));
        }
        if self.trunk.widths.last() != Some(&(3 * self.bands)) {
            return Err(Error::Configuration(format!(
                "last estimator width must be 3 x {} = {}",
                self.bands,
                3 * self.bands
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<WavelengthGrid> {
        let g = WavelengthGrid::default();
        WavelengthGrid::new(g.start_nm, g.step_nm, self.bands)
    }
}

/// Sensitivity estimator: RGB image to `d x 3` sensitivity.
#[derive(Clone, Debug)]
pub struct EstimatorNet<T> {
    pub config: EstimatorConfig,
    pub trunk: Trunk,
    pub params: ParamSet<T>,
}

/// One training example in the transposed layout used by the loss:
/// `rgb` is `(3, h, w)`, `cube` is `H^T` as `(d, h w)` and `label` is `S^T`
/// as `(3, d)`.
#[derive(Clone, Debug)]
pub struct EstimatorSample<T> {
    pub rgb: Tensor<T>,
    pub cube: Tensor<T>,
    pub label: Tensor<T>,
}

impl<T: Real> EstimatorSample<T> {
    pub fn new(cube: &SpectralCube, sens: &SensitivityMatrix, rgb: &RgbImage) -> Result<Self> {
        if cube.height() != rgb.height() || cube.width() != rgb.width() {
            return Err(Error::shape("cube and image sizes differ"));
        }
        if cube.bands() != sens.bands() {
            return Err(Error::shape("cube and sensitivity band counts differ"));
        }
        let d = cube.bands();
        let hw = cube.pixels();
        Ok(EstimatorSample {
            rgb: rgb.to_tensor(),
            cube: cube.to_tensor().reshape(vec![d, hw])?,
            label: Tensor::new(
                vec![3, d],
                sens.to_channel_major()
                    .into_iter()
                    .map(T::from_f64)
                    .collect(),
            )?,
        })
    }
}

fn smoothness_transposed<T: Real>(d: usize) -> Result<Tensor<T>> {
    let op = SmoothnessOperator::new(d)?;
    let t = op.matrix();
    let rows = op.rows();
    let mut tt = vec![T::ZERO; d * rows];
    for i in 0..rows {
        for j in 0..d {
            tt[j * rows + i] = T::from_f64(t[i * d + j]);
        }
    }
    Tensor::new(vec![d, rows], tt)
}

/// Weighted estimator loss on the tape. `s_hat` is `S^T` as `(3, d)`.
/// Returns `(total, image_loss)`.
pub fn estimator_loss<T: Real>(
    tape: &mut Tape<T>,
    s_hat: Var,
    sample: &EstimatorSample<T>,
    weights: &LossWeights,
) -> Result<(Var, Var)> {
    let d = sample.label.shape()[1];
    let n = sample.cube.shape()[1];
    let h_t = tape.constant(sample.cube.clone());
    let i_t = tape.constant(sample.rgb.clone().reshape(vec![3, n])?);
    let pred = tape.matmul(s_hat, h_t)?;
    let resid = tape.sub(i_t, pred)?;
    let sq = tape.sum_squares(resid);
    let image = tape.scale(sq, T::from_f64(1.0 / n as f64));

    let label = tape.constant(sample.label.clone());
    let dl = tape.sub(label, s_hat)?;
    let label_loss = tape.sum_squares(dl);

    let t_t = tape.constant(smoothness_transposed(d)?);
    let curv = tape.matmul(s_hat, t_t)?;
    let smooth = tape.sum_squares(curv);

    let a = tape.scale(image, T::from_f64(weights.image));
    let b = tape.scale(label_loss, T::from_f64(weights.label));
    let c = tape.scale(smooth, T::from_f64(weights.smoothness));
    let ab = tape.add(a, b)?;
    let total = tape.add(ab, c)?;
    Ok((total, image))
}

impl<T: Real> EstimatorNet<T> {
    pub fn new(config: EstimatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let trunk = Trunk::new(&mut params, &config.trunk, 3, false, &mut rng)?;
        Ok(EstimatorNet {
            config,
            trunk,
            params,
        })
    }

    /// `(3, h, w)` image to `S^T` as `(3, d)`.
    pub fn graph(&self, tape: &mut Tape<T>, params: &ParamSet<T>, x: Var) -> Result<Var> {
        let (c, _, _) = tape.value(x).chw()?;
        if c != 3 {
            return Err(Error::shape(format!(
                "estimator expects 3 input channels, got {c}"
            )));
        }
        let v = self.trunk.forward(tape, params, x)?;
        tape.reshape(v, &[3, self.config.bands])
    }

    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        sample: &EstimatorSample<T>,
        weights: &LossWeights,
    ) -> Result<(Var, Var)> {
        let x = tape.constant(sample.rgb.clone());
        let s_hat = self.graph(tape, params, x)?;
        estimator_loss(tape, s_hat, sample, weights)
    }

    pub fn estimate_tensor(&self, x: &Tensor<T>) -> Result<SensitivityMatrix> {
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let s = self.graph(&mut tape, &self.params, xv)?;
        let flat: Vec<f64> = tape.value(s).data().iter().map(|v| v.to_f64()).collect();
        SensitivityMatrix::from_channel_major(self.config.grid()?, &flat)
    }

    pub fn estimate(&self, img: &RgbImage) -> Result<SensitivityMatrix> {
        self.estimate_tensor(&img.to_tensor())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(
            path,
            KIND,
            serde_json::to_value(&self.config)?,
            &self.params,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = open_checkpoint(path, KIND)?;
        let config: EstimatorConfig = serde_json::from_value(ck.descriptor.config.clone())?;
        let mut net = Self::new(config, 0)?;
        ck.apply_to(&mut net.params)?;
        Ok(net)
    }
}
