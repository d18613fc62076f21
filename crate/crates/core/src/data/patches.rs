use crate::error::{Error, Result};
use crate::spectral::{RgbImage, SpectralCube};

/// Aligned cube and image crops with their top-left corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub y: usize,
    pub x: usize,
    pub cube: SpectralCube,
    pub rgb: RgbImage,
}

/// Start offsets along one axis: `0, stride, 2 stride, ...`, plus a final
/// window flush with the edge when the stride leaves a remainder.
pub fn patch_origins(len: usize, patch: usize, stride: usize) -> Result<Vec<usize>> {
    if patch == 0 || stride == 0 {
        return Err(Error::param("patch size and stride must be positive"));
    }
    if patch > len {
        return Err(Error::shape(format!(
            "patch {patch} is larger than the image side {len}"
        )));
    }
    let mut out: Vec<usize> = (0..=len - patch).step_by(stride).collect();
    if *out.last().expect("at least one origin") + patch < len {
        out.push(len - patch);
    }
    Ok(out)
}

pub fn crop_cube(
    cube: &SpectralCube,
    y: usize,
    x: usize,
    h: usize,
    w: usize,
) -> Result<SpectralCube> {
    if y + h > cube.height() || x + w > cube.width() {
        return Err(Error::shape("crop extends past the cube"));
    }
    let d = cube.bands();
    let mut values = Vec::with_capacity(h * w * d);
    for r in y..y + h {
        let start = (r * cube.width() + x) * d;
        values.extend_from_slice(&cube.values()[start..start + w * d]);
    }
    SpectralCube::signed(h, w, *cube.grid(), values)
}

pub fn crop_rgb(img: &RgbImage, y: usize, x: usize, h: usize, w: usize) -> Result<RgbImage> {
    if y + h > img.height() || x + w > img.width() {
        return Err(Error::shape("crop extends past the image"));
    }
    let mut values = Vec::with_capacity(h * w * 3);
    for r in y..y + h {
        let start = (r * img.width() + x) * 3;
        values.extend_from_slice(&img.values()[start..start + w * 3]);
    }
    RgbImage::new(h, w, values)
}

/// Square patches covering the whole pair at the given stride.
pub fn extract_patches(
    cube: &SpectralCube,
    rgb: &RgbImage,
    patch: usize,
    stride: usize,
) -> Result<Vec<Patch>> {
    if cube.height() != rgb.height() || cube.width() != rgb.width() {
        return Err(Error::shape("cube and image sizes differ"));
    }
    let ys = patch_origins(cube.height(), patch, stride)?;
    let xs = patch_origins(cube.width(), patch, stride)?;
    let mut out = Vec::with_capacity(ys.len() * xs.len());
    for &y in &ys {
        for &x in &xs {
            out.push(Patch {
                y,
                x,
                cube: crop_cube(cube, y, x, patch, patch)?,
                rgb: crop_rgb(rgb, y, x, patch, patch)?,
            });
        }
    }
    Ok(out)
}

/// Pastes patch cubes back into a `height x width` cube; later patches win
/// where they overlap.
pub fn reassemble(patches: &[Patch], height: usize, width: usize) -> Result<SpectralCube> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Data("no patches to reassemble".into()))?;
    let grid = *first.cube.grid();
    let d = grid.count;
    let mut values = vec![0.0; height * width * d];
    for p in patches {
        let (ph, pw) = (p.cube.height(), p.cube.width());
        if p.y + ph > height || p.x + pw > width || p.cube.grid() != &grid {
            return Err(Error::shape("patch does not fit the target cube"));
        }
        for r in 0..ph {
            let dst = ((p.y + r) * width + p.x) * d;
            values[dst..dst + pw * d]
                .copy_from_slice(&p.cube.values()[r * pw * d..(r + 1) * pw * d]);
        }
    }
    SpectralCube::signed(height, width, grid, values)
}
