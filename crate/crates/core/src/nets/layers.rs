use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Conv2dSpec, ParamId, ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Number of convolutions in the estimator and classifier trunk.
pub const TRUNK_CONVS: usize = 12;
/// 1-based conv indices followed by a 2x2 max-pool.
pub const POOL_AFTER: [usize; 4] = [3, 6, 9, 12];

/// Square convolution with "same" padding.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv {
    pub fn new<T: Real, R: Rng>(
        params: &mut ParamSet<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_fan_in_uniform(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            in_channels * kernel * kernel,
            rng,
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Conv {
            weight,
            bias,
            kernel,
            in_channels,
            out_channels,
        }
    }

    /// Same layout as [`Conv::new`] but with all weights zero.
    pub fn zeros<T: Real>(
        params: &mut ParamSet<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    ) -> Self {
        let weight = params.add(
            format!("{name}.weight"),
            Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Conv {
            weight,
            bias,
            kernel,
            in_channels,
            out_channels,
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        x: Var,
    ) -> Result<Var> {
        let w = tape.param(params, self.weight);
        let b = tape.param(params, self.bias);
        tape.conv2d(x, w, b, Conv2dSpec::same(self.kernel))
    }
}

/// Layout of the 12-conv, 4-pool trunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrunkConfig {
    /// Output channels of each conv; the last entry is the network output.
    pub widths: Vec<usize>,
    pub kernel: usize,
    /// Pooling window and stride; 1 turns the pools into identities.
    #[serde(default = "default_pool")]
    pub pool: usize,
}

fn default_pool() -> usize {
    2
}

impl TrunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != TRUNK_CONVS {
            return Err(Error::Configuration(format!(
                "trunk needs {TRUNK_CONVS} conv widths, got {}",
                self.widths.len()
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::Configuration("conv widths must be positive".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Configuration(format!(
                "same padding needs an odd kernel, got {}",
                self.kernel
            )));
        }
        if self.pool == 0 {
            return Err(Error::Configuration("pool window must be positive".into()));
        }
        Ok(())
    }

    /// Smallest spatial size that survives the four pools.
    pub fn min_input(&self) -> usize {
        self.pool.pow(POOL_AFTER.len() as u32)
    }
}

/// Conv-ReLU stack with pooling after layers 3, 6, 9 and 12. The last conv is
/// linear.
#[derive(Clone, Debug)]
pub struct Trunk {
    pub convs: Vec<Conv>,
    pub pool: usize,
}

impl Trunk {
    pub fn new<T: Real, R: Rng>(
        params: &mut ParamSet<T>,
        cfg: &TrunkConfig,
        in_channels: usize,
        zero_last: bool,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut convs = Vec::with_capacity(TRUNK_CONVS);
        let mut cin = in_channels;
        for (i, &cout) in cfg.widths.iter().enumerate() {
            let name = format!("trunk.{i}");
            let conv = if zero_last && i + 1 == TRUNK_CONVS {
                Conv::zeros(params, &name, cin, cout, cfg.kernel)
            } else {
                Conv::new(params, &name, cin, cout, cfg.kernel, rng)
            };
            convs.push(conv);
            cin = cout;
        }
        Ok(Trunk {
            convs,
            pool: cfg.pool,
        })
    }

    /// `(C, H, W) -> (widths[11])` after the global spatial average.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        x: Var,
    ) -> Result<Var> {
        let (_, h, w) = tape.value(x).chw()?;
        let min = self.pool.pow(POOL_AFTER.len() as u32);
        if h < min || w < min {
            return Err(Error::shape(format!(
                "input is {h}x{w}; the trunk pools four times and needs at least {min}x{min}"
            )));
        }
        let mut y = x;
        for (i, conv) in self.convs.iter().enumerate() {
            y = conv.forward(tape, params, y)?;
            let last = i + 1 == self.convs.len();
            if !last {
                y = tape.relu(y);
            }
            if self.pool > 1 && POOL_AFTER.contains(&(i + 1)) {
                y = tape.maxpool2d(y, self.pool, self.pool)?;
            }
        }
        tape.global_avg_pool(y)
    }
}
