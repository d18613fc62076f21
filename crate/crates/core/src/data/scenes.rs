use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::GmmChannel;
use crate::spectral::{normalize_radiance, SpectralCube, WavelengthGrid};

/// Layout of generated scenes: a background plus `objects` elliptical
/// regions, each with its own smooth spectrum and mild shading texture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySceneSpec {
    pub height: usize,
    pub width: usize,
    pub objects: usize,
    /// Relative amplitude of the multiplicative shading texture.
    pub texture: f64,
    pub seed: u64,
}

impl Default for ToySceneSpec {
    fn default() -> Self {
        ToySceneSpec {
            height: 64,
            width: 64,
            objects: 6,
            texture: 0.1,
            seed: 0,
        }
    }
}

/// Component widths of scene spectra, in band units.
pub const SPECTRUM_WIDTHS: (f64, f64) = (3.0, 10.0);

/// A smooth spectrum `b + a Σ π_j exp(-(x - μ_j)² / h_j²)` with centers
/// anywhere on the band axis, evaluated at band indices `1..=bands`.
pub fn random_spectrum<R: Rng>(rng: &mut R, bands: usize) -> Vec<f64> {
    let k = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..k).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mix = GmmChannel {
        weights: raw.iter().map(|w| w / total).collect(),
        centers: (0..k)
            .map(|_| rng.random_range(1.0..=bands as f64))
            .collect(),
        widths: (0..k)
            .map(|_| rng.random_range(SPECTRUM_WIDTHS.0..=SPECTRUM_WIDTHS.1))
            .collect(),
    };
    let base = rng.random_range(0.1..0.5);
    let amp = rng.random_range(0.2..1.0);
    (1..=bands)
        .map(|x| base + amp * mix.eval(x as f64))
        .collect()
}

struct Region {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    gain: f64,
    spectrum: Vec<f64>,
    freq: (f64, f64),
    phase: f64,
}

impl Region {
    fn random<R: Rng>(rng: &mut R, spec: &ToySceneSpec, bands: usize, background: bool) -> Self {
        let (h, w) = (spec.height as f64, spec.width as f64);
        Region {
            cy: rng.random_range(0.0..h),
            cx: rng.random_range(0.0..w),
            ry: if background {
                f64::INFINITY
            } else {
                rng.random_range(0.1 * h..0.4 * h)
            },
            rx: if background {
                f64::INFINITY
            } else {
                rng.random_range(0.1 * w..0.4 * w)
            },
            gain: rng.random_range(0.3..1.0),
            spectrum: random_spectrum(rng, bands),
            freq: (rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        let dy = (y - self.cy) / self.ry;
        let dx = (x - self.cx) / self.rx;
        dy * dy + dx * dx <= 1.0
    }
}

/// Scene `index` of the family described by `spec`, normalized to a maximum
/// of one and rounded to `f32` so it survives the HSB format bit for bit.
pub fn toy_scene(spec: &ToySceneSpec, index: u64) -> Result<SpectralCube> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::param("scene size must be positive"));
    }
    let grid = WavelengthGrid::default();
    let d = grid.count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let mut regions = vec![Region::random(&mut rng, spec, d, true)];
    for _ in 0..spec.objects {
        regions.push(Region::random(&mut rng, spec, d, false));
    }
    let mut values = vec![0.0; spec.height * spec.width * d];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let (yf, xf) = (y as f64, x as f64);
            let r = regions
                .iter()
                .rev()
                .find(|r| r.contains(yf, xf))
                .expect("background covers every pixel");
            let shade = 1.0 + spec.texture * (r.freq.0 * yf + r.freq.1 * xf + r.phase).sin();
            let px = &mut values[(y * spec.width + x) * d..][..d];
            for (v, s) in px.iter_mut().zip(&r.spectrum) {
                *v = r.gain * shade * s;
            }
        }
    }
    let cube = normalize_radiance(&SpectralCube::new(spec.height, spec.width, grid, values)?)?;
    let rounded = cube.values().iter().map(|v| *v as f32 as f64).collect();
    SpectralCube::new(spec.height, spec.width, grid, rounded)
}

/// Scenes `0..n` of the family.
pub fn generate_toy_scenes(spec: &ToySceneSpec, n: usize) -> Result<Vec<SpectralCube>> {
    if n == 0 {
        return Err(Error::param("scene count must be at least 1"));
    }
    if !(spec.texture >= 0.0 && spec.texture < 1.0) {
        return Err(Error::param(format!(
            "texture amplitude must be in [0, 1), got {}",
            spec.texture
        )));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| toy_scene(spec, i))
        .collect()
}
