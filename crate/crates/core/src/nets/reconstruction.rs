use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Conv;
use super::{open_checkpoint, save_checkpoint};
use crate::autodiff::{ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::spectral::{
    build_conditional_input, RgbImage, SensitivityMatrix, SpectralCube, WavelengthGrid,
};

pub const KIND: &str = "reconstruction";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    /// Trained across many sensitivities, sees RGB only.
    Generic,
    /// Sees RGB plus the sensitivity broadcast as extra channels.
    Conditional,
    /// Trained for one sensitivity.
    Specialized,
}

impl std::str::FromStr for ReconMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(ReconMode::Generic),
            "conditional" => Ok(ReconMode::Conditional),
            "specialized" => Ok(ReconMode::Specialized),
            other => Err(Error::Configuration(format!(
                "unknown mode '{other}', expected generic, conditional or specialized"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub mode: ReconMode,
    pub bands: usize,
    /// Feature width of the core branch.
    pub width: usize,
    pub kernel: usize,
    /// Residual blocks appended after the first two.
    #[serde(default)]
    pub extra_blocks: usize,
}

impl ReconstructionConfig {
    pub fn new(mode: ReconMode, bands: usize, width: usize) -> Self {
        ReconstructionConfig {
            mode,
            bands,
            width,
            kernel: 3,
            extra_blocks: 0,
        }
    }

    pub fn input_channels(&self) -> usize {
        match self.mode {
            ReconMode::Conditional => 3 + 3 * self.bands,
            ReconMode::Generic | ReconMode::Specialized => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands < 2 || self.width == 0 {
            return Err(Error::Configuration(
                "reconstruction needs bands >= 2 and width > 0".into(),
            ));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Configuration(format!(
                "same padding needs an odd kernel, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<WavelengthGrid> {
        let g = WavelengthGrid::default();
        WavelengthGrid::new(g.start_nm, g.step_nm, self.bands)
    }
}

/// RGB (or conditional input) to a `d`-band cube, as the sum of a deep core
/// branch and a shallow 1x1 branch.
///
/// Core: `f0 = relu(conv_in x)`, `f1 = blocks(f0) + f0`,
/// `f2 = relu(conv_mid f1) + f0`, `core = conv_out f2`.
#[derive(Clone, Debug)]
pub struct ReconstructionNet<T> {
    pub config: ReconstructionConfig,
    pub conv_in: Conv,
    pub blocks: Vec<(Conv, Conv)>,
    pub conv_mid: Conv,
    pub conv_out: Conv,
    pub shallow: Conv,
    pub params: ParamSet<T>,
}

/// Input tensor and target cube, both channels-first.
#[derive(Clone, Debug)]
pub struct ReconSample<T> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
}

impl<T: Real> ReconstructionNet<T> {
    pub fn new(config: ReconstructionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let (w, k, d) = (config.width, config.kernel, config.bands);
        let conv_in = Conv::new(&mut p, "core.in", config.input_channels(), w, k, &mut rng);
        let blocks = (0..2 + config.extra_blocks)
            .map(|i| {
                (
                    Conv::new(&mut p, &format!("core.block{i}.a"), w, w, k, &mut rng),
                    Conv::new(&mut p, &format!("core.block{i}.b"), w, w, k, &mut rng),
                )
            })
            .collect();
        let conv_mid = Conv::new(&mut p, "core.mid", w, w, k, &mut rng);
        let conv_out = Conv::new(&mut p, "core.out", w, d, k, &mut rng);
        let shallow = Conv::new(&mut p, "shallow", config.input_channels(), d, 1, &mut rng);
        Ok(ReconstructionNet {
            config,
            conv_in,
            blocks,
            conv_mid,
            conv_out,
            shallow,
            params: p,
        })
    }

    fn check_input(&self, t: &Tensor<T>) -> Result<()> {
        let (c, _, _) = t.chw()?;
        if c != self.config.input_channels() {
            return Err(Error::shape(format!(
                "{:?} model expects {} input channels, got {c}",
                self.config.mode,
                self.config.input_channels()
            )));
        }
        Ok(())
    }

    pub fn graph(&self, tape: &mut Tape<T>, params: &ParamSet<T>, x: Var) -> Result<Var> {
        self.check_input(tape.value(x))?;
        let f0 = self.conv_in.forward(tape, params, x)?;
        let f0 = tape.relu(f0);
        let mut r = f0;
        for (a, b) in &self.blocks {
            let y = a.forward(tape, params, r)?;
            let y = tape.relu(y);
            let y = b.forward(tape, params, y)?;
            r = tape.add(r, y)?;
        }
        let f1 = tape.add(r, f0)?;
        let f2 = self.conv_mid.forward(tape, params, f1)?;
        let f2 = tape.relu(f2);
        let f2 = tape.add(f2, f0)?;
        let core = self.conv_out.forward(tape, params, f2)?;
        let shallow = self.shallow.forward(tape, params, x)?;
        tape.add(core, shallow)
    }

    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        sample: &ReconSample<T>,
    ) -> Result<Var> {
        let x = tape.constant(sample.input.clone());
        let y = self.graph(tape, params, x)?;
        let t = tape.constant(sample.target.clone());
        tape.mse_loss(y, t)
    }

    pub fn forward_tensor(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let y = self.graph(&mut tape, &self.params, xv)?;
        Ok(tape.take_value(y))
    }

    /// Output of the shallow branch alone.
    pub fn shallow_tensor(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let y = self.shallow.forward(&mut tape, &self.params, xv)?;
        Ok(tape.take_value(y))
    }

    /// Builds the input tensor this model's mode expects. `sens` is required
    /// in conditional mode and ignored otherwise.
    pub fn input_for(&self, img: &RgbImage, sens: Option<&SensitivityMatrix>) -> Result<Tensor<T>> {
        match (self.config.mode, sens) {
            (ReconMode::Conditional, Some(s)) => {
                if s.bands() != self.config.bands {
                    return Err(Error::shape(format!(
                        "sensitivity has {} bands, model has {}",
                        s.bands(),
                        self.config.bands
                    )));
                }
                Ok(build_conditional_input(img, s))
            }
            (ReconMode::Conditional, None) => Err(Error::Configuration(
                "conditional reconstruction needs a sensitivity".into(),
            )),
            _ => Ok(img.to_tensor()),
        }
    }

    pub fn reconstruct(
        &self,
        img: &RgbImage,
        sens: Option<&SensitivityMatrix>,
    ) -> Result<SpectralCube> {
        let y = self.forward_tensor(&self.input_for(img, sens)?)?;
        SpectralCube::from_tensor(&y, self.config.grid()?)
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
        let config: ReconstructionConfig = serde_json::from_value(ck.descriptor.config.clone())?;
        let mut net = Self::new(config, 0)?;
        ck.apply_to(&mut net.params)?;
        Ok(net)
    }
}
