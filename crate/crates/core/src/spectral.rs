//! Image formation: wavelength grids, radiance cubes, sensitivity matrices and
//! the discrete rendering sum `I_c(u) = Σ_n S_c(λ_n) L(u, λ_n)`.
//!
//! All pixel buffers are row-major and band-interleaved-by-pixel: the value for
//! pixel `(y, x)` and band `n` lives at `(y * width + x) * bands + n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

/// Uniform wavelength sampling `start_nm + i * step_nm` for `i < count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub step_nm: f64,
    pub count: usize,
}

impl Default for WavelengthGrid {
    /// 31 bands, 400 nm to 700 nm in 10 nm steps.
    fn default() -> Self {
        WavelengthGrid {
            start_nm: 400.0,
            step_nm: 10.0,
            count: 31,
        }
    }
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, step_nm: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::param(format!(
                "grid needs at least 2 bands, got {count}"
            )));
        }
        if !(step_nm > 0.0) || !step_nm.is_finite() || !start_nm.is_finite() {
            return Err(Error::param(format!(
                "grid step must be positive and finite, got start {start_nm}, step {step_nm}"
            )));
        }
        Ok(WavelengthGrid {
            start_nm,
            step_nm,
            count,
        })
    }

    pub fn wavelength(&self, band: usize) -> f64 {
        self.start_nm + band as f64 * self.step_nm
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.wavelength(i))
    }

    pub fn end_nm(&self) -> f64 {
        self.wavelength(self.count - 1)
    }
}

/// Radiance cube `L(u, λ_n)` of shape `height x width x grid.count`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCube {
    height: usize,
    width: usize,
    grid: WavelengthGrid,
    values: Vec<f64>,
}

impl SpectralCube {
    pub fn new(
        height: usize,
        width: usize,
        grid: WavelengthGrid,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = height * width * grid.count;
        if values.len() != expected {
            return Err(Error::shape(format!(
                "cube {height}x{width}x{} needs {expected} values, got {}",
                grid.count,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(format!(
                "radiance must be finite and nonnegative, found {} at index {i}",
                values[i]
            )));
        }
        Ok(SpectralCube {
            height,
            width,
            grid,
            values,
        })
    }

    /// Like [`SpectralCube::new`] but accepts negative entries, as produced by
    /// reconstruction networks. Values must still be finite.
    pub fn signed(
        height: usize,
        width: usize,
        grid: WavelengthGrid,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = height * width * grid.count;
        if values.len() != expected {
            return Err(Error::shape(format!(
                "cube {height}x{width}x{} needs {expected} values, got {}",
                grid.count,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(SpectralCube {
            height,
            width,
            grid,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize, grid: WavelengthGrid) -> Self {
        SpectralCube {
            height,
            width,
            grid,
            values: vec![0.0; height * width * grid.count],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.grid.count
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Spectrum of pixel `(y, x)`.
    pub fn spectrum(&self, y: usize, x: usize) -> &[f64] {
        let d = self.grid.count;
        let i = (y * self.width + x) * d;
        &self.values[i..i + d]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every value by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        SpectralCube::new(
            self.height,
            self.width,
            self.grid,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Channels-first `(bands, height, width)` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let d = self.grid.count;
        let hw = self.pixels();
        let mut data = vec![T::ZERO; d * hw];
        for p in 0..hw {
            for n in 0..d {
                data[n * hw + p] = T::from_f64(self.values[p * d + n]);
            }
        }
        Tensor::new(vec![d, self.height, self.width], data).expect("shape is consistent")
    }

    /// Inverse of [`SpectralCube::to_tensor`]. Negative predictions are kept as
    /// they are, so this bypasses the nonnegativity check.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, grid: WavelengthGrid) -> Result<Self> {
        let (d, h, w) = t.chw()?;
        if d != grid.count {
            return Err(Error::shape(format!(
                "tensor has {d} channels but the grid has {} bands",
                grid.count
            )));
        }
        let hw = h * w;
        let src = t.data();
        let mut values = vec![0.0; d * hw];
        for p in 0..hw {
            for n in 0..d {
                values[p * d + n] = src[n * hw + p].to_f64();
            }
        }
        Ok(SpectralCube {
            height: h,
            width: w,
            grid,
            values,
        })
    }
}

/// Three-channel camera response `I_c(u)`. Values are raw responses, not clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "rgb image {height}x{width} needs {} values, got {}",
                height * width * 3,
                values.len()
            )));
        }
        Ok(RgbImage {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.values[i], self.values[i + 1], self.values[i + 2]]
    }

    /// Channels-first `(3, height, width)` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let hw = self.pixels();
        let mut data = vec![T::ZERO; 3 * hw];
        for p in 0..hw {
            for c in 0..3 {
                data[c * hw + p] = T::from_f64(self.values[p * 3 + c]);
            }
        }
        Tensor::new(vec![3, self.height, self.width], data).expect("shape is consistent")
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = t.chw()?;
        if c != 3 {
            return Err(Error::shape(format!(
                "rgb tensor must have 3 channels, got {c}"
            )));
        }
        let hw = h * w;
        let mut values = vec![0.0; 3 * hw];
        for p in 0..hw {
            for ch in 0..3 {
                values[p * 3 + ch] = t.data()[ch * hw + p].to_f64();
            }
        }
        RgbImage::new(h, w, values)
    }
}

/// Camera sensitivity `S ∈ R^{d x 3}`; entry `(n, c)` is stored at `n * 3 + c`.
///
/// Measured and generated curves are nonnegative. Estimates may carry small
/// negative entries; use [`SensitivityMatrix::is_physical`] to check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    grid: WavelengthGrid,
    values: Vec<f64>,
}

impl SensitivityMatrix {
    pub fn new(grid: WavelengthGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count * 3 {
            return Err(Error::shape(format!(
                "sensitivity on {} bands needs {} values, got {}",
                grid.count,
                grid.count * 3,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sensitivity values must be finite"));
        }
        Ok(SensitivityMatrix { grid, values })
    }

    /// Builds a matrix from three per-channel curves (R, G, B).
    pub fn from_channels(grid: WavelengthGrid, channels: [&[f64]; 3]) -> Result<Self> {
        let d = grid.count;
        if channels.iter().any(|c| c.len() != d) {
            return Err(Error::shape(format!("each channel needs {d} values")));
        }
        let mut values = vec![0.0; d * 3];
        for (c, curve) in channels.iter().enumerate() {
            for n in 0..d {
                values[n * 3 + c] = curve[n];
            }
        }
        SensitivityMatrix::new(grid, values)
    }

    pub fn zeros(grid: WavelengthGrid) -> Self {
        SensitivityMatrix {
            grid,
            values: vec![0.0; grid.count * 3],
        }
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn bands(&self) -> usize {
        self.grid.count
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, band: usize, channel: usize) -> f64 {
        self.values[band * 3 + channel]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.grid.count)
            .map(|n| self.values[n * 3 + c])
            .collect()
    }

    /// Channel-major flattening `[S_R(λ_1..λ_d), S_G(..), S_B(..)]`.
    pub fn to_channel_major(&self) -> Vec<f64> {
        (0..3).flat_map(|c| self.channel(c)).collect()
    }

    pub fn from_channel_major(grid: WavelengthGrid, flat: &[f64]) -> Result<Self> {
        let d = grid.count;
        if flat.len() != 3 * d {
            return Err(Error::shape(format!(
                "channel-major sensitivity needs {} values, got {}",
                3 * d,
                flat.len()
            )));
        }
        SensitivityMatrix::from_channels(grid, [&flat[..d], &flat[d..2 * d], &flat[2 * d..]])
    }

    pub fn is_physical(&self) -> bool {
        self.values.iter().all(|v| *v >= 0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SensitivityMatrix {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Entrywise sum; both matrices must share a grid.
    pub fn try_add(&self, other: &SensitivityMatrix) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::shape("sensitivity grids differ"));
        }
        Ok(SensitivityMatrix {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// Renders `I = H S` pixel by pixel.
pub fn render_rgb(cube: &SpectralCube, sens: &SensitivityMatrix) -> Result<RgbImage> {
    if cube.grid != sens.grid {
        return Err(Error::shape(format!(
            "cube grid {:?} does not match sensitivity grid {:?}",
            cube.grid, sens.grid
        )));
    }
    let d = cube.bands();
    let s = &sens.values;
    let mut out = vec![0.0; cube.pixels() * 3];
    out.par_chunks_mut(3)
        .zip(cube.values.par_chunks(d))
        .for_each(|(rgb, spectrum)| {
            for (c, slot) in rgb.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (n, l) in spectrum.iter().enumerate() {
                    acc += s[n * 3 + c] * l;
                }
                *slot = acc;
            }
        });
    RgbImage::new(cube.height, cube.width, out)
}

/// Scales the cube so its maximum radiance is exactly one.
pub fn normalize_radiance(cube: &SpectralCube) -> Result<SpectralCube> {
    let max = cube.max_value();
    if !(max > 0.0) {
        return Err(Error::DegenerateInput(
            "cannot normalize a cube with no positive radiance".into(),
        ));
    }
    let values = cube.values.iter().map(|v| v / max).collect();
    Ok(SpectralCube {
        height: cube.height,
        width: cube.width,
        grid: cube.grid,
        values,
    })
}

/// Display transform `v -> clamp(v, 0, 1)^(1/gamma)`. Visualization only.
pub fn gamma_correct(img: &RgbImage, gamma: f64) -> Result<RgbImage> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::param(format!("gamma must be positive, got {gamma}")));
    }
    let inv = 1.0 / gamma;
    let values = img
        .values
        .iter()
        .map(|v| {
            let v = v.clamp(0.0, 1.0);
            if gamma == 1.0 {
                v
            } else {
                v.powf(inv)
            }
        })
        .collect();
    RgbImage::new(img.height, img.width, values)
}

/// Stacks the image with the spatially broadcast sensitivity:
/// `[R, G, B, S_R(λ_1..λ_d), S_G(λ_1..λ_d), S_B(λ_1..λ_d)]` per pixel,
/// returned channels-first with `3 + 3d` channels.
pub fn build_conditional_input<T: Real>(img: &RgbImage, sens: &SensitivityMatrix) -> Tensor<T> {
    let hw = img.pixels();
    let flat = sens.to_channel_major();
    let channels = 3 + flat.len();
    let mut data = Vec::with_capacity(channels * hw);
    let rgb = img.to_tensor::<T>();
    data.extend_from_slice(rgb.data());
    for s in flat {
        data.extend(std::iter::repeat_n(T::from_f64(s), hw));
    }
    Tensor::new(vec![channels, img.height, img.width], data).expect("shape is consistent")
}
