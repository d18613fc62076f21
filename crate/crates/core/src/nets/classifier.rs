use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Trunk, TrunkConfig};
use super::{open_checkpoint, save_checkpoint};
use crate::autodiff::{softmax, ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::spectral::RgbImage;

pub const KIND: &str = "classifier";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub classes: usize,
    /// Same layout as the estimator trunk; the last width is `classes`.
    pub trunk: TrunkConfig,
}

impl ClassifierConfig {
    pub fn scaled(classes: usize, base: usize) -> Self {
        let mut widths = vec![base; 3];
        widths.extend([2 * base; 3]);
        widths.extend([4 * base; 5]);
        widths.push(classes);
        ClassifierConfig {
            classes,
            trunk: TrunkConfig {
                widths,
                kernel: 3,
                pool: 2,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trunk.validate()?;
        if self.classes == 0 {
            return Err(Error::Configuration(
                "classifier needs at least one class".into(),
            ));
        }
        if self.trunk.widths.last() != Some(&self.classes) {
            return Err(Error::Configuration(format!(
                "last classifier width must equal the class count {}",
                self.classes
            )));
        }
        Ok(())
    }
}

/// Picks one of `classes` known sensitivities from an RGB image.
#[derive(Clone, Debug)]
pub struct ClassifierNet<T> {
    pub config: ClassifierConfig,
    pub trunk: Trunk,
    pub params: ParamSet<T>,
}

impl<T: Real> ClassifierNet<T> {
    /// The output layer starts at zero, so an untrained network is uniform.
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let trunk = Trunk::new(&mut params, &config.trunk, 3, true, &mut rng)?;
        Ok(ClassifierNet {
            config,
            trunk,
            params,
        })
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    /// `(3, h, w)` image to `classes` logits.
    pub fn graph(&self, tape: &mut Tape<T>, params: &ParamSet<T>, x: Var) -> Result<Var> {
        let (c, _, _) = tape.value(x).chw()?;
        if c != 3 {
            return Err(Error::shape(format!(
                "classifier expects 3 input channels, got {c}"
            )));
        }
        self.trunk.forward(tape, params, x)
    }

    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        x: &Tensor<T>,
        label: usize,
    ) -> Result<Var> {
        let xv = tape.constant(x.clone());
        let z = self.graph(tape, params, xv)?;
        tape.softmax_cross_entropy(z, label)
    }

    pub fn probabilities_tensor(&self, x: &Tensor<T>) -> Result<Vec<f64>> {
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let z = self.graph(&mut tape, &self.params, xv)?;
        Ok(softmax(tape.value(z).data())
            .into_iter()
            .map(|p| p.to_f64())
            .collect())
    }

    pub fn probabilities(&self, img: &RgbImage) -> Result<Vec<f64>> {
        self.probabilities_tensor(&img.to_tensor())
    }

    /// Index of the largest probability (first on ties).
    pub fn predict_tensor(&self, x: &Tensor<T>) -> Result<usize> {
        let p = self.probabilities_tensor(x)?;
        Ok(argmax(&p))
    }

    pub fn predict(&self, img: &RgbImage) -> Result<usize> {
        self.predict_tensor(&img.to_tensor())
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
        let config: ClassifierConfig = serde_json::from_value(ck.descriptor.config.clone())?;
        let mut net = Self::new(config, 0)?;
        ck.apply_to(&mut net.params)?;
        Ok(net)
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}
