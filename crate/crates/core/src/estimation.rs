//! Sensitivity-recovery objectives and the closed-form Tikhonov estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::{smoothness_loss, SmoothnessOperator};
use crate::spectral::{render_rgb, RgbImage, SensitivityMatrix, SpectralCube, WavelengthGrid};

/// Default smoothness weight for [`tikhonov_estimate`] on `[0, 1]` data.
pub const DEFAULT_GAMMA: f64 = 1e-3;

/// Flattened `(H, I)` pair used by the sensitivity losses: `H` is `n x d`,
/// `I` is `n x 3`, both row-major.
#[derive(Clone, Debug)]
pub struct FlattenedScene {
    pub h: Vec<f64>,
    pub i: Vec<f64>,
    pub n: usize,
    pub d: usize,
}

impl FlattenedScene {
    pub fn new(h: Vec<f64>, i: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if h.len() != n * d {
            return Err(Error::shape(format!(
                "H needs {n}x{d} values, got {}",
                h.len()
            )));
        }
        if i.len() != n * 3 {
            return Err(Error::shape(format!(
                "I needs {n}x3 values, got {}",
                i.len()
            )));
        }
        if n == 0 {
            return Err(Error::shape("scene has no pixels"));
        }
        Ok(FlattenedScene { h, i, n, d })
    }

    pub fn from_images(cube: &SpectralCube, img: &RgbImage) -> Result<Self> {
        if cube.height() != img.height() || cube.width() != img.width() {
            return Err(Error::shape(format!(
                "cube is {}x{} but image is {}x{}",
                cube.height(),
                cube.width(),
                img.height(),
                img.width()
            )));
        }
        FlattenedScene::new(
            cube.values().to_vec(),
            img.values().to_vec(),
            cube.pixels(),
            cube.bands(),
        )
    }

    /// Renders `I = H S` for a cube and returns the pair.
    pub fn rendered(cube: &SpectralCube, sens: &SensitivityMatrix) -> Result<Self> {
        let img = render_rgb(cube, sens)?;
        FlattenedScene::from_images(cube, &img)
    }
}

/// Weights of the image, label and smoothness terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub image: f64,
    pub label: f64,
    pub smoothness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            image: 1.0,
            label: 0.1,
            smoothness: 0.01,
        }
    }
}

impl LossWeights {
    pub fn new(image: f64, label: f64, smoothness: f64) -> Result<Self> {
        let w = LossWeights {
            image,
            label,
            smoothness,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.image, self.label, self.smoothness];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(format!(
                "loss weights must be nonnegative, got {all:?}"
            )));
        }
        if all.iter().all(|v| *v == 0.0) {
            return Err(Error::param("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

fn check_estimate(scene: &FlattenedScene, s_hat: &SensitivityMatrix) -> Result<()> {
    if s_hat.bands() != scene.d {
        return Err(Error::shape(format!(
            "scene has {} bands, sensitivity has {}",
            scene.d,
            s_hat.bands()
        )));
    }
    Ok(())
}

/// `(1/n) ‖I - H Ŝ‖_F²`.
pub fn image_loss(scene: &FlattenedScene, s_hat: &SensitivityMatrix) -> Result<f64> {
    check_estimate(scene, s_hat)?;
    let d = scene.d;
    let s = s_hat.values();
    let mut total = 0.0;
    for p in 0..scene.n {
        let row = &scene.h[p * d..(p + 1) * d];
        for c in 0..3 {
            let pred: f64 = row.iter().enumerate().map(|(k, h)| h * s[k * 3 + c]).sum();
            let r = scene.i[p * 3 + c] - pred;
            total += r * r;
        }
    }
    Ok(total / scene.n as f64)
}

/// `‖S - Ŝ‖_F²`.
pub fn label_loss(s: &SensitivityMatrix, s_hat: &SensitivityMatrix) -> Result<f64> {
    if s.grid() != s_hat.grid() {
        return Err(Error::shape("label and estimate are on different grids"));
    }
    Ok(s.values()
        .iter()
        .zip(s_hat.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Individual terms and the weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub image: f64,
    pub label: f64,
    pub smoothness: f64,
    pub total: f64,
}

/// `λ1 L_i + λ2 L_l + λ3 L_s`, smoothness taken on the estimate.
pub fn total_loss(
    scene: &FlattenedScene,
    s: &SensitivityMatrix,
    s_hat: &SensitivityMatrix,
    t: &SmoothnessOperator,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    w.validate()?;
    let image = image_loss(scene, s_hat)?;
    let label = label_loss(s, s_hat)?;
    let smoothness = smoothness_loss(s_hat, t)?;
    Ok(LossBreakdown {
        image,
        label,
        smoothness,
        total: w.image * image + w.label * label + w.smoothness * smoothness,
    })
}

/// `‖I - H S‖_F² + γ ‖T S‖_F²`, the function [`tikhonov_estimate`] minimizes.
pub fn tikhonov_objective(
    scene: &FlattenedScene,
    t: &SmoothnessOperator,
    gamma: f64,
    s: &SensitivityMatrix,
) -> Result<f64> {
    Ok(image_loss(scene, s)? * scene.n as f64 + gamma * smoothness_loss(s, t)?)
}

/// Root-mean-square error of the re-rendered RGB, `sqrt(L_i / 3)`.
pub fn reconstructed_rgb_rmse(scene: &FlattenedScene, s_hat: &SensitivityMatrix) -> Result<f64> {
    Ok((image_loss(scene, s_hat)? / 3.0).sqrt())
}

/// Normal-equation system `(HᵀH + γ TᵀT) s_c = Hᵀ i_c`, assembled once and
/// shared by the three channel solves.
pub struct NormalEquations {
    pub matrix: DMatrix<f64>,
    /// `d x 3`; column `c` is `Hᵀ i_c`.
    pub rhs: DMatrix<f64>,
}

impl NormalEquations {
    pub fn assemble(scene: &FlattenedScene, t: &SmoothnessOperator, gamma: f64) -> Result<Self> {
        if t.bands() != scene.d {
            return Err(Error::shape(format!(
                "operator is for {} bands, scene has {}",
                t.bands(),
                scene.d
            )));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::param(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        let d = scene.d;
        let h = DMatrix::from_row_slice(scene.n, d, &scene.h);
        let i = DMatrix::from_row_slice(scene.n, 3, &scene.i);
        let tm = DMatrix::from_row_slice(d - 2, d, &t.matrix());
        let matrix = h.transpose() * &h + gamma * (tm.transpose() * &tm);
        let rhs = h.transpose() * i;
        Ok(NormalEquations { matrix, rhs })
    }

    /// Largest residual `‖A s_c - b_c‖ / ‖b_c‖` over the three channels.
    pub fn relative_residual(&self, s: &SensitivityMatrix) -> f64 {
        (0..3)
            .map(|c| {
                let x = DVector::from_vec(s.channel(c));
                let b = self.rhs.column(c);
                let r = &self.matrix * x - b;
                r.norm() / b.norm().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

/// Closed-form minimizer of `‖I - H S‖_F² + γ ‖T S‖_F²` via a Cholesky
/// factorization of the `d x d` normal matrix.
pub fn tikhonov_estimate(
    scene: &FlattenedScene,
    t: &SmoothnessOperator,
    gamma: f64,
) -> Result<SensitivityMatrix> {
    let eq = NormalEquations::assemble(scene, t, gamma)?;
    let d = scene.d;
    let chol = eq.matrix.clone().cholesky().ok_or_else(|| {
        Error::Solver(format!(
            "normal matrix HᵀH + γTᵀT (γ = {gamma}) is not positive definite: H is rank-deficient \
             on the null space of the smoothness term"
        ))
    })?;
    let l = chol.l();
    let diag: Vec<f64> = (0..d).map(|k| l[(k, k)] * l[(k, k)]).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > max * f64::EPSILON * d as f64) {
        return Err(Error::Solver(format!(
            "normal matrix is numerically singular (pivot ratio {:.3e}, γ = {gamma}): \
             H does not determine every direction the smoothness term leaves free",
            min / max
        )));
    }
    let sol = chol.solve(&eq.rhs);
    let grid = WavelengthGrid {
        count: d,
        ..WavelengthGrid::default()
    };
    let mut values = vec![0.0; d * 3];
    for n in 0..d {
        for c in 0..3 {
            values[n * 3 + c] = sol[(n, c)];
        }
    }
    SensitivityMatrix::new(grid, values)
}

/// Estimates the sensitivity of `img` given its radiance cube, using the
/// cube's wavelength grid for the result.
pub fn estimate_from_pair(
    cube: &SpectralCube,
    img: &RgbImage,
    gamma: f64,
) -> Result<SensitivityMatrix> {
    let scene = FlattenedScene::from_images(cube, img)?;
    let t = SmoothnessOperator::new(cube.bands())?;
    let s = tikhonov_estimate(&scene, &t, gamma)?;
    SensitivityMatrix::new(*cube.grid(), s.values().to_vec())
}
