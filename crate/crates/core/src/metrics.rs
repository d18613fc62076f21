//! Reconstruction quality metrics.
//!
//! Every function takes two equally sized buffers of the same layout. Images
//! with several channels are band-interleaved-by-pixel, as everywhere else in
//! the crate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{RgbImage, SpectralCube};

/// Guard in relative-error denominators.
pub const EPSILON: f64 = 1e-7;
/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Tag stored with every report so numbers stay tied to the formulas used.
pub const FORMULA_VERSION: &str = "metrics-v1";

fn check(gt: &[f64], est: &[f64]) -> Result<()> {
    if gt.len() != est.len() {
        return Err(Error::shape(format!(
            "metric inputs differ in length: {} vs {}",
            gt.len(),
            est.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::shape("metric inputs are empty"));
    }
    Ok(())
}

pub fn mse(gt: &[f64], est: &[f64]) -> Result<f64> {
    check(gt, est)?;
    Ok(gt
        .iter()
        .zip(est)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / gt.len() as f64)
}

pub fn rmse(gt: &[f64], est: &[f64]) -> Result<f64> {
    Ok(mse(gt, est)?.sqrt())
}

/// `20 log10(max_val) - 10 log10(mse)`, capped at [`PSNR_CAP`].
pub fn psnr(gt: &[f64], est: &[f64], max_val: f64) -> Result<f64> {
    if !(max_val > 0.0) {
        return Err(Error::param(format!(
            "psnr peak must be positive, got {max_val}"
        )));
    }
    let m = mse(gt, est)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((20.0 * max_val.log10() - 10.0 * m.log10()).min(PSNR_CAP))
}

fn relative(g: f64, e: f64, eps: f64) -> f64 {
    (g - e).abs() / g.max(eps)
}

/// Mean of `|gt - est| / max(gt, eps)`.
pub fn mrae_with(gt: &[f64], est: &[f64], eps: f64) -> Result<f64> {
    check(gt, est)?;
    Ok(gt
        .iter()
        .zip(est)
        .map(|(g, e)| relative(*g, *e, eps))
        .sum::<f64>()
        / gt.len() as f64)
}

pub fn mrae(gt: &[f64], est: &[f64]) -> Result<f64> {
    mrae_with(gt, est, EPSILON)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering with the normalized Gaussian window.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ho, wo) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = (0..n).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..n).map(|i| k[i] * rows[(y + i) * wo + x]).sum();
        }
    }
    out
}

/// Mean structural similarity of one band (`h x w`, row-major) with an 11x11
/// Gaussian window (σ = 1.5) over valid positions.
pub fn ssim(gt: &[f64], est: &[f64], h: usize, w: usize, data_range: f64) -> Result<f64> {
    check(gt, est)?;
    if gt.len() != h * w {
        return Err(Error::shape(format!(
            "band of {} values is not {h}x{w}",
            gt.len()
        )));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "ssim window {SSIM_WINDOW} larger than image {h}x{w}"
        )));
    }
    if !(data_range > 0.0) {
        return Err(Error::param("ssim data range must be positive"));
    }
    let k = gaussian_window();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_x = filter_valid(gt, h, w, &k);
    let mu_y = filter_valid(est, h, w, &k);
    let xx = filter_valid(&prod(gt, gt), h, w, &k);
    let yy = filter_valid(&prod(est, est), h, w, &k);
    let xy = filter_valid(&prod(gt, est), h, w, &k);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sxx = xx[i] - mx * mx;
            let syy = yy[i] - my * my;
            let sxy = xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
                / ((mx * mx + my * my + c1) * (sxx + syy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Mean SSIM over the bands of an interleaved `h x w x channels` buffer.
pub fn ssim_multiband(
    gt: &[f64],
    est: &[f64],
    h: usize,
    w: usize,
    channels: usize,
    data_range: f64,
) -> Result<f64> {
    check(gt, est)?;
    if gt.len() != h * w * channels {
        return Err(Error::shape("buffer size does not match h x w x channels"));
    }
    let band = |buf: &[f64], c: usize| {
        (0..h * w)
            .map(|p| buf[p * channels + c])
            .collect::<Vec<_>>()
    };
    let mut total = 0.0;
    for c in 0..channels {
        total += ssim(&band(gt, c), &band(est, c), h, w, data_range)?;
    }
    Ok(total / channels as f64)
}

/// Relative RMSE aggregated two ways: `(mean over pixels of the per-pixel RMS
/// relative error, RMS over all entries)`.
pub fn relative_rmse(gt: &[f64], est: &[f64], channels: usize) -> Result<(f64, f64)> {
    check(gt, est)?;
    if channels == 0 || !gt.len().is_multiple_of(channels) {
        return Err(Error::shape("buffer is not a whole number of pixels"));
    }
    let sq: Vec<f64> = gt
        .iter()
        .zip(est)
        .map(|(g, e)| relative(*g, *e, EPSILON).powi(2))
        .collect();
    let pixels = gt.len() / channels;
    let mean_of_pixels = sq
        .chunks(channels)
        .map(|px| (px.iter().sum::<f64>() / channels as f64).sqrt())
        .sum::<f64>()
        / pixels as f64;
    let rms = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
    Ok((mean_of_pixels, rms))
}

/// RMSE divided by the mean of the ground truth.
pub fn rrmse_g(gt: &[f64], est: &[f64]) -> Result<f64> {
    let r = rmse(gt, est)?;
    let mean = gt.iter().sum::<f64>() / gt.len() as f64;
    if mean == 0.0 {
        return Ok(if r == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(r / mean.abs())
}

/// Rounds to 8-bit levels of `data_range` and maps back.
pub fn quantize_u8(values: &[f64], data_range: f64) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let q = ((v / data_range).clamp(0.0, 1.0) * 255.0).round();
            q / 255.0 * data_range
        })
        .collect()
}

/// Named scalar results plus the conventions used to compute them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub formula_version: String,
    pub data_range: f64,
    pub quantized: bool,
    pub values: BTreeMap<String, f64>,
    pub formulas: BTreeMap<String, String>,
}

impl MetricReport {
    fn new(data_range: f64, quantized: bool) -> Self {
        MetricReport {
            formula_version: FORMULA_VERSION.to_string(),
            data_range,
            quantized,
            values: BTreeMap::new(),
            formulas: BTreeMap::new(),
        }
    }

    fn put(&mut self, name: &str, value: f64, formula: &str) {
        self.values.insert(name.to_string(), value);
        self.formulas.insert(name.to_string(), formula.to_string());
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `name,name,...` header line matching [`MetricReport::csv_row`].
    pub fn csv_header(&self) -> String {
        self.values.keys().cloned().collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.values
            .values()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Basic error metrics between two images of any channel count.
pub fn image_report(
    gt: &[f64],
    est: &[f64],
    h: usize,
    w: usize,
    channels: usize,
    data_range: f64,
) -> Result<MetricReport> {
    check(gt, est)?;
    let mut r = MetricReport::new(data_range, false);
    r.put("RMSE", rmse(gt, est)?, "sqrt(mean((gt-est)^2))");
    r.put(
        "PSNR",
        psnr(gt, est, data_range)?,
        "20 log10(range) - 10 log10(mse), capped at 100 dB",
    );
    r.put("MRAE", mrae(gt, est)?, "mean(|gt-est| / max(gt, 1e-7))");
    if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
        r.put(
            "SSIM",
            ssim_multiband(gt, est, h, w, channels, data_range)?,
            "mean over bands of Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03)",
        );
    }
    Ok(r)
}

/// The full table: basic metrics, relative variants, 0-255 scaled RMSE and
/// their 8-bit quantized counterparts.
pub fn full_report(
    gt: &[f64],
    est: &[f64],
    h: usize,
    w: usize,
    channels: usize,
    data_range: f64,
) -> Result<MetricReport> {
    let mut r = image_report(gt, est, h, w, channels, data_range)?;
    let (mean_px, rms) = relative_rmse(gt, est, channels)?;
    r.put(
        "rRMSE_mean",
        mean_px,
        "mean over pixels of sqrt(mean over bands ((gt-est)/max(gt,1e-7))^2)",
    );
    r.put(
        "rRMSE_rms",
        rms,
        "sqrt(mean over entries ((gt-est)/max(gt,1e-7))^2)",
    );
    r.put("rRMSE", rms, "alias of rRMSE_rms");
    r.put("rRMSE_G", rrmse_g(gt, est)?, "RMSE / mean(gt)");
    let to255 = 255.0 / data_range;
    r.put(
        "RMSE_G",
        rmse(gt, est)? * to255,
        "RMSE on the [0, 255] scale",
    );

    let qg = quantize_u8(gt, data_range);
    let qe = quantize_u8(est, data_range);
    let (qmean, qrms) = relative_rmse(&qg, &qe, channels)?;
    r.put(
        "RMSE_uint",
        rmse(&qg, &qe)?,
        "RMSE after rounding both inputs to 8 bits",
    );
    r.put(
        "rRMSE_uint",
        qrms,
        "rRMSE_rms after rounding both inputs to 8 bits",
    );
    r.put(
        "rRMSE_mean_uint",
        qmean,
        "rRMSE_mean after rounding both inputs to 8 bits",
    );
    r.put(
        "rRMSE_G_uint",
        rrmse_g(&qg, &qe)?,
        "rRMSE_G after rounding both inputs to 8 bits",
    );
    r.put(
        "RMSE_G_uint",
        rmse(&qg, &qe)? * to255,
        "RMSE_G after rounding both inputs to 8 bits",
    );
    Ok(r)
}

pub fn cube_report(gt: &SpectralCube, est: &SpectralCube, data_range: f64) -> Result<MetricReport> {
    if gt.height() != est.height() || gt.width() != est.width() || gt.bands() != est.bands() {
        return Err(Error::shape("cubes differ in shape"));
    }
    full_report(
        gt.values(),
        est.values(),
        gt.height(),
        gt.width(),
        gt.bands(),
        data_range,
    )
}

pub fn rgb_report(gt: &RgbImage, est: &RgbImage, data_range: f64) -> Result<MetricReport> {
    if gt.height() != est.height() || gt.width() != est.width() {
        return Err(Error::shape("images differ in shape"));
    }
    image_report(
        gt.values(),
        est.values(),
        gt.height(),
        gt.width(),
        3,
        data_range,
    )
}
