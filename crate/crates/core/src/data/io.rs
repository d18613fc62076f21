//! `HSB1` cube files and PNG export.
//!
//! HSB layout (little-endian): magic `HSB1`; `u32` height, width, bands;
//! `f64` start_nm, step_nm and a reserved `0.0`; then `height * width * bands`
//! `f32` values, band-interleaved by pixel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{RgbImage, SpectralCube, WavelengthGrid};

pub const HSB_MAGIC: &[u8; 4] = b"HSB1";
const HEADER: usize = 4 + 3 * 4 + 3 * 8;

pub fn write_hsb<W: Write>(mut out: W, cube: &SpectralCube) -> Result<()> {
    let dim = |v: usize| {
        u32::try_from(v)
            .map_err(|_| Error::shape(format!("dimension {v} does not fit the HSB header")))
    };
    let mut buf = Vec::with_capacity(HEADER + 4 * cube.values().len());
    buf.extend_from_slice(HSB_MAGIC);
    for v in [cube.height(), cube.width(), cube.bands()] {
        buf.extend_from_slice(&dim(v)?.to_le_bytes());
    }
    for v in [cube.grid().start_nm, cube.grid().step_nm, 0.0] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in cube.values() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a cube. Values may be negative (stored predictions); they must be
/// finite.
pub fn read_hsb<R: Read>(mut input: R) -> Result<SpectralCube> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER {
        return Err(Error::format(
            bytes.len() as u64,
            format!("HSB header needs {HEADER} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..4] != HSB_MAGIC {
        return Err(Error::format(0, "bad magic, expected HSB1"));
    }
    let u = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (h, w, d) = (u(4), u(8), u(12));
    let (start, step, reserved) = (f(16), f(24), f(32));
    if reserved != 0.0 {
        return Err(Error::format(
            32,
            format!("reserved header field must be 0, got {reserved}"),
        ));
    }
    let grid = WavelengthGrid::new(start, step, d).map_err(|e| Error::format(12, e.to_string()))?;
    let count = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| Error::format(4, "cube dimensions overflow"))?;
    let expected = HEADER + 4 * count;
    if bytes.len() != expected {
        let at = bytes.len().min(expected) as u64;
        return Err(Error::format(
            at,
            format!(
                "{h}x{w}x{d} cube needs {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let values = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    SpectralCube::signed(h, w, grid, values)
}

pub fn save_hsb(path: &Path, cube: &SpectralCube) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_hsb(&mut out, cube)?;
    out.flush()?;
    Ok(())
}

pub fn load_hsb(path: &Path) -> Result<SpectralCube> {
    read_hsb(BufReader::new(File::open(path)?))
}

/// RGB images are stored as 3-band HSB files on the grid `0, 1, 2`.
pub fn rgb_to_cube(img: &RgbImage) -> Result<SpectralCube> {
    SpectralCube::signed(
        img.height(),
        img.width(),
        WavelengthGrid::new(0.0, 1.0, 3)?,
        img.values().to_vec(),
    )
}

pub fn cube_to_rgb(cube: &SpectralCube) -> Result<RgbImage> {
    if cube.bands() != 3 {
        return Err(Error::shape(format!(
            "expected a 3-band file, got {} bands",
            cube.bands()
        )));
    }
    RgbImage::new(cube.height(), cube.width(), cube.values().to_vec())
}

/// 8-bit RGB PNG after clamping to `[0, 1]` and optional gamma correction.
pub fn write_png(path: &Path, img: &RgbImage, gamma: Option<f64>) -> Result<()> {
    let shown = match gamma {
        Some(g) => crate::spectral::gamma_correct(img, g)?,
        None => img.clone(),
    };
    let data: Vec<u8> = shown
        .values()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img.width() as u32, img.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer
        .write_image_data(&data)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer
        .finish()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> SpectralCube {
        let grid = WavelengthGrid::default();
        let v = (0..2 * 3 * 31)
            .map(|i| (i as f32 * 0.013).sin().abs() as f64)
            .collect();
        SpectralCube::new(2, 3, grid, v).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = cube();
        let mut buf = Vec::new();
        write_hsb(&mut buf, &c).unwrap();
        assert_eq!(buf.len(), HEADER + 4 * 186);
        assert_eq!(&buf[..4], b"HSB1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 400.0);
        let back = read_hsb(&buf[..]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let mut buf = Vec::new();
        write_hsb(&mut buf, &cube()).unwrap();
        for cut in [0, 3, 20, HEADER, buf.len() - 1] {
            assert!(
                matches!(read_hsb(&buf[..cut]), Err(Error::Format { .. })),
                "cut {cut}"
            );
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_hsb(&bad[..]),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = buf.clone();
        bad[32..40].copy_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(
            read_hsb(&bad[..]),
            Err(Error::Format { offset: 32, .. })
        ));
        let mut long = buf;
        long.push(0);
        assert!(matches!(read_hsb(&long[..]), Err(Error::Format { .. })));
    }

    #[test]
    fn rgb_files_round_trip() {
        let img = RgbImage::new(1, 2, vec![0.25, -0.5, 1.5, 0.0, 0.125, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_hsb(&mut buf, &rgb_to_cube(&img).unwrap()).unwrap();
        assert_eq!(cube_to_rgb(&read_hsb(&buf[..]).unwrap()).unwrap(), img);
    }

    #[test]
    fn png_export() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = RgbImage::new(
            2,
            2,
            vec![0.0, 0.5, 1.0, 2.0, -1.0, 0.25, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        )
        .unwrap();
        write_png(&p, &img, Some(2.2)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
