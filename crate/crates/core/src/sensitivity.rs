//! Sensitivity functions: the Gaussian-mixture family used for training, the
//! measured camera set, and the second-difference smoothness operator.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SensitivityMatrix, WavelengthGrid};

/// Default amplitude of generated curves.
pub const DEFAULT_ALPHA: f64 = 0.125;
/// Most mixture components allowed per channel.
pub const MAX_COMPONENTS: usize = 5;
/// Allowed range of the width parameter `h`.
pub const WIDTH_RANGE: (f64, f64) = (2.0, 6.0);
/// Allowed component centers (band-index units, 1-based) for R, G and B.
pub const CENTER_RANGES: [(f64, f64); 3] = [(16.0, 26.0), (10.0, 20.0), (5.0, 15.0)];

const CSV_HEADER: &str = "wavelength_nm,R,G,B";

/// Mixture for one color channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmChannel {
    pub weights: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl GmmChannel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// `Σ_j π_j exp(-(x - μ_j)² / h_j²)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.centers)
            .zip(&self.widths)
            .map(|((p, m), h)| p * (-(x - m) * (x - m) / (h * h)).exp())
            .sum()
    }
}

/// Parameters of one generated sensitivity: a mixture per channel (R, G, B)
/// and a global scale `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSensitivityParams {
    pub channels: [GmmChannel; 3],
    pub alpha: f64,
}

impl GmmSensitivityParams {
    /// Checks the constraints of the continuous family. `center_ranges` is
    /// `None` for unconstrained centers (used by the toy scene spectra).
    pub fn validate_with(&self, center_ranges: Option<&[(f64, f64); 3]>) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::param(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            let k = ch.components();
            if k == 0 || k > MAX_COMPONENTS {
                return Err(Error::param(format!(
                    "channel {c}: component count {k} outside 1..={MAX_COMPONENTS}"
                )));
            }
            if ch.centers.len() != k || ch.widths.len() != k {
                return Err(Error::param(format!(
                    "channel {c}: weights, centers and widths must have equal length"
                )));
            }
            if ch.weights.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::param(format!(
                    "channel {c}: mixture weight outside [0, 1]"
                )));
            }
            let total: f64 = ch.weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!(
                    "channel {c}: mixture weights sum to {total}, expected 1"
                )));
            }
            if ch
                .widths
                .iter()
                .any(|h| !(WIDTH_RANGE.0..=WIDTH_RANGE.1).contains(h))
            {
                return Err(Error::param(format!(
                    "channel {c}: width outside [{}, {}]",
                    WIDTH_RANGE.0, WIDTH_RANGE.1
                )));
            }
            if let Some(ranges) = center_ranges {
                let (lo, hi) = ranges[c];
                if ch.centers.iter().any(|m| !(lo..=hi).contains(m)) {
                    return Err(Error::param(format!(
                        "channel {c}: center outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(Some(&CENTER_RANGES))
    }
}

/// Evaluates `S_c(x) = α Σ_j π_j exp(-(x - μ_j)² / h_j²)` at band indices
/// `x = 1..=grid.count`.
pub fn evaluate_gmm(
    params: &GmmSensitivityParams,
    grid: WavelengthGrid,
) -> Result<SensitivityMatrix> {
    params.validate()?;
    Ok(evaluate_unchecked(params, grid))
}

pub(crate) fn evaluate_unchecked(
    params: &GmmSensitivityParams,
    grid: WavelengthGrid,
) -> SensitivityMatrix {
    let d = grid.count;
    let mut values = vec![0.0; d * 3];
    for (c, ch) in params.channels.iter().enumerate() {
        for n in 0..d {
            values[n * 3 + c] = params.alpha * ch.eval((n + 1) as f64);
        }
    }
    SensitivityMatrix::new(grid, values).expect("gmm output is finite and well-shaped")
}

/// Draws weights uniformly at random and normalizes them to sum to one.
pub(crate) fn sample_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    // (0, 1] keeps the normalizer away from zero.
    let raw: Vec<f64> = (0..k).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|u| u / total).collect()
}

/// Draws one member of the continuous family from `rng`.
pub fn sample_continuous_with<R: Rng>(rng: &mut R) -> GmmSensitivityParams {
    let mut channel = |c: usize| {
        let k = rng.random_range(1..=MAX_COMPONENTS);
        let (lo, hi) = CENTER_RANGES[c];
        let weights = sample_simplex(rng, k);
        let centers = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
        let widths = (0..k)
            .map(|_| rng.random_range(WIDTH_RANGE.0..=WIDTH_RANGE.1))
            .collect();
        GmmChannel {
            weights,
            centers,
            widths,
        }
    };
    let channels = [channel(0), channel(1), channel(2)];
    GmmSensitivityParams {
        channels,
        alpha: DEFAULT_ALPHA,
    }
}

/// Deterministic draw from the continuous family.
pub fn sample_continuous(seed: u64) -> GmmSensitivityParams {
    sample_continuous_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Second-difference operator `T ∈ R^{(d-2) x d}`, row `i` = `(1, -2, 1)` at
/// columns `i, i+1, i+2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmoothnessOperator {
    d: usize,
}

impl SmoothnessOperator {
    pub fn new(d: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::param(format!(
                "second differences need at least 3 bands, got {d}"
            )));
        }
        Ok(SmoothnessOperator { d })
    }

    pub fn bands(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> usize {
        self.d - 2
    }

    /// Dense row-major `(d-2) x d` matrix.
    pub fn matrix(&self) -> Vec<f64> {
        let d = self.d;
        let mut t = vec![0.0; (d - 2) * d];
        for i in 0..d - 2 {
            t[i * d + i] = 1.0;
            t[i * d + i + 1] = -2.0;
            t[i * d + i + 2] = 1.0;
        }
        t
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.d);
        v.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
    }
}

/// `‖T S‖_F²`.
pub fn smoothness_loss(s: &SensitivityMatrix, t: &SmoothnessOperator) -> Result<f64> {
    if t.d != s.bands() {
        return Err(Error::shape(format!(
            "operator is for {} bands, sensitivity has {}",
            t.d,
            s.bands()
        )));
    }
    Ok((0..3)
        .map(|c| t.apply(&s.channel(c)).iter().map(|v| v * v).sum::<f64>())
        .sum())
}

/// One camera's raw measurement table.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSensitivityTable {
    pub name: String,
    pub wavelengths: Vec<f64>,
    pub rgb: Vec<[f64; 3]>,
}

/// Parses the `wavelength_nm,R,G,B` CSV format.
pub fn parse_sensitivity_csv(name: &str, text: &str) -> Result<RawSensitivityTable> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines();
    let mut offset = 0u64;
    let header = lines
        .next()
        .ok_or_else(|| Error::format(0, format!("{name}: empty sensitivity file")))?;
    if header.trim_end_matches('\r') != CSV_HEADER {
        return Err(Error::format(
            0,
            format!("{name}: expected header '{CSV_HEADER}', found '{header}'"),
        ));
    }
    offset += header.len() as u64 + 1;
    let mut wavelengths = Vec::new();
    let mut rgb = Vec::new();
    for line in lines {
        let row = line.trim_end_matches('\r');
        if row.trim().is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::format(
                offset,
                format!("{name}: expected 4 fields, found {}", fields.len()),
            ));
        }
        let mut nums = [0.0; 4];
        for (slot, f) in nums.iter_mut().zip(&fields) {
            *slot = f
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::format(offset, format!("{name}: bad number '{f}': {e}")))?;
            if !slot.is_finite() {
                return Err(Error::format(
                    offset,
                    format!("{name}: non-finite value '{f}'"),
                ));
            }
        }
        wavelengths.push(nums[0]);
        rgb.push([nums[1], nums[2], nums[3]]);
        offset += line.len() as u64 + 1;
    }
    Ok(RawSensitivityTable {
        name: name.to_string(),
        wavelengths,
        rgb,
    })
}

/// Writes a matrix in the `wavelength_nm,R,G,B` CSV format. Numbers use the
/// shortest representation that parses back to the same bits.
pub fn sensitivity_to_csv(s: &SensitivityMatrix) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for n in 0..s.bands() {
        out.push_str(&format!(
            "{},{:?},{:?},{:?}\n",
            s.grid().wavelength(n),
            s.get(n, 0),
            s.get(n, 1),
            s.get(n, 2)
        ));
    }
    out
}

/// Reads a sensitivity CSV that is already on a uniform grid, without
/// resampling or clamping. The grid is taken from the file.
pub fn sensitivity_from_csv(name: &str, text: &str) -> Result<SensitivityMatrix> {
    let table = parse_sensitivity_csv(name, text)?;
    let n = table.wavelengths.len();
    if n < 2 {
        return Err(Error::format(0, format!("{name}: need at least two rows")));
    }
    let start = table.wavelengths[0];
    let step = table.wavelengths[1] - start;
    check_uniform(&table, step)?;
    let grid = WavelengthGrid::new(start, step, n)?;
    let values = table.rgb.iter().flat_map(|r| r.iter().copied()).collect();
    SensitivityMatrix::new(grid, values)
}

fn check_uniform(table: &RawSensitivityTable, step: f64) -> Result<()> {
    for (i, w) in table.wavelengths.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::format(
                0,
                format!(
                    "{}: wavelengths not strictly increasing at row {} ({} then {})",
                    table.name,
                    i + 2,
                    w[0],
                    w[1]
                ),
            ));
        }
    }
    for (i, w) in table.wavelengths.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs().max(1.0) {
            return Err(Error::Ingestion(format!(
                "{}: sample spacing is not uniform at row {}",
                table.name,
                i + 2
            )));
        }
    }
    Ok(())
}

/// Named sensitivity curves on one shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraSensitivitySet {
    pub names: Vec<String>,
    pub functions: Vec<SensitivityMatrix>,
}

impl CameraSensitivitySet {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn grid(&self) -> Option<&WavelengthGrid> {
        self.functions.first().map(|s| s.grid())
    }
}

/// Resamples one table onto `grid` by linear interpolation, clamping negative
/// readings to zero. Samples past the end of the grid are ignored.
pub fn resample_table(
    table: &RawSensitivityTable,
    grid: WavelengthGrid,
) -> Result<SensitivityMatrix> {
    let wl = &table.wavelengths;
    if wl.len() < 2 || wl.len() != table.rgb.len() {
        return Err(Error::Ingestion(format!(
            "{}: need at least two samples",
            table.name
        )));
    }
    let step = wl[1] - wl[0];
    check_uniform(table, step)?;
    let tol = 1e-9 * grid.step_nm;
    if wl[0] > grid.start_nm + tol || *wl.last().unwrap() < grid.end_nm() - tol {
        return Err(Error::Ingestion(format!(
            "{}: samples cover {}..{} nm, need at least {}..{} nm",
            table.name,
            wl[0],
            wl.last().unwrap(),
            grid.start_nm,
            grid.end_nm()
        )));
    }
    let mut values = vec![0.0; grid.count * 3];
    for (n, target) in grid.wavelengths().enumerate() {
        // last sample index with wl[j] <= target
        let j = match wl.partition_point(|w| *w <= target + tol) {
            0 => 0,
            p => (p - 1).min(wl.len() - 2),
        };
        let (x0, x1) = (wl[j], wl[j + 1]);
        let t = ((target - x0) / (x1 - x0)).clamp(0.0, 1.0);
        for c in 0..3 {
            let (a, b) = (table.rgb[j][c].max(0.0), table.rgb[j + 1][c].max(0.0));
            values[n * 3 + c] = if t == 0.0 {
                a
            } else if t == 1.0 {
                b
            } else {
                a + t * (b - a)
            };
        }
    }
    SensitivityMatrix::new(grid, values)
}

/// Resamples every table onto `grid` and applies one shared factor so the
/// set maximum equals `peak` (twice the continuous-family amplitude by default).
pub fn load_camera_set(
    tables: &[RawSensitivityTable],
    grid: WavelengthGrid,
    peak: f64,
) -> Result<CameraSensitivitySet> {
    if tables.is_empty() {
        return Err(Error::Ingestion("no camera tables supplied".into()));
    }
    if !(peak > 0.0) {
        return Err(Error::param(format!(
            "target peak must be positive, got {peak}"
        )));
    }
    let resampled = tables
        .iter()
        .map(|t| resample_table(t, grid))
        .collect::<Result<Vec<_>>>()?;
    let max = resampled.iter().map(|s| s.max_value()).fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Ingestion("every camera curve is zero".into()));
    }
    let factor = peak / max;
    Ok(CameraSensitivitySet {
        names: tables.iter().map(|t| t.name.clone()).collect(),
        functions: resampled
            .iter()
            .map(|s| {
                if factor == 1.0 {
                    s.clone()
                } else {
                    s.scaled(factor)
                }
            })
            .collect(),
    })
}

/// Reads every `*.csv` in each directory (sorted by file name).
pub fn read_camera_tables<P: AsRef<Path>>(dirs: &[P]) -> Result<Vec<RawSensitivityTable>> {
    let mut tables = Vec::new();
    for dir in dirs {
        let mut paths: Vec<_> = fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = fs::read_to_string(&path)?;
            tables.push(parse_sensitivity_csv(&name, &text)?);
        }
    }
    Ok(tables)
}

/// Default target peak of the measured set.
pub fn default_camera_peak() -> f64 {
    2.0 * DEFAULT_ALPHA
}

/// Directory holding the bundled camera fixtures.
pub fn fixture_camera_dirs() -> [std::path::PathBuf; 2] {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("cameras");
    [root.join("four_nm"), root.join("ten_nm")]
}

/// Loads the bundled 40-camera set on the default grid.
pub fn load_fixture_cameras() -> Result<CameraSensitivitySet> {
    let tables = read_camera_tables(&fixture_camera_dirs())?;
    load_camera_set(&tables, WavelengthGrid::default(), default_camera_peak())
}

/// One exported sample of the continuous family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledSensitivity {
    pub seed: u64,
    pub params: GmmSensitivityParams,
    /// `d x 3` row-major values.
    pub matrix: Vec<[f64; 3]>,
}

/// JSON array of parameters plus evaluated matrices.
pub fn export_samples(seeds: &[u64], grid: WavelengthGrid) -> Result<String> {
    let out = seeds
        .iter()
        .map(|&seed| {
            let params = sample_continuous(seed);
            let s = evaluate_gmm(&params, grid)?;
            let matrix = (0..s.bands())
                .map(|n| [s.get(n, 0), s.get(n, 1), s.get(n, 2)])
                .collect();
            Ok(SampledSensitivity {
                seed,
                params,
                matrix,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(serde_json::to_string_pretty(&out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn single(mu: f64, h: f64) -> GmmChannel {
        GmmChannel {
            weights: vec![1.0],
            centers: vec![mu],
            widths: vec![h],
        }
    }

    #[test]
    fn peak_equals_alpha_at_center() {
        let p = GmmSensitivityParams {
            channels: [single(21.0, 4.0), single(15.0, 4.0), single(10.0, 4.0)],
            alpha: DEFAULT_ALPHA,
        };
        let s = evaluate_gmm(&p, WavelengthGrid::default()).unwrap();
        // x = 21 is band index 20
        assert_eq!(s.get(20, 0), 0.125);
        assert_eq!(s.get(14, 1), 0.125);
        assert_eq!(s.get(9, 2), 0.125);
    }

    #[test]
    fn two_component_matches_scalar_formula() {
        let ch = GmmChannel {
            weights: vec![0.5, 0.5],
            centers: vec![10.0, 20.0],
            widths: vec![2.0, 2.0],
        };
        let p = GmmSensitivityParams {
            channels: [single(20.0, 3.0), ch.clone(), single(10.0, 3.0)],
            alpha: DEFAULT_ALPHA,
        };
        let s = evaluate_gmm(&p, WavelengthGrid::default()).unwrap();
        let x: f64 = 15.0;
        let want = 0.125
            * (0.5 * (-(x - 10.0).powi(2) / 4.0).exp() + 0.5 * (-(x - 20.0).powi(2) / 4.0).exp());
        assert!((s.get(14, 1) - want).abs() <= 1e-15);
    }

    #[test]
    fn component_order_does_not_matter() {
        let p = sample_continuous(11);
        let mut q = p.clone();
        for ch in q.channels.iter_mut() {
            ch.weights.reverse();
            ch.centers.reverse();
            ch.widths.reverse();
        }
        let a = evaluate_gmm(&p, WavelengthGrid::default()).unwrap();
        let b = evaluate_gmm(&q, WavelengthGrid::default()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = sample_continuous(3);
        p.channels[0].centers[0] = 5.0;
        assert!(evaluate_gmm(&p, WavelengthGrid::default()).is_err());
        let mut p = sample_continuous(3);
        p.channels[1].widths[0] = 7.0;
        assert!(evaluate_gmm(&p, WavelengthGrid::default()).is_err());
        let mut p = sample_continuous(3);
        p.channels[2].weights[0] += 0.1;
        assert!(evaluate_gmm(&p, WavelengthGrid::default()).is_err());
        let mut p = sample_continuous(3);
        p.channels[2] = GmmChannel {
            weights: vec![],
            centers: vec![],
            widths: vec![],
        };
        assert!(evaluate_gmm(&p, WavelengthGrid::default()).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_continuous(42), sample_continuous(42));
        assert_ne!(sample_continuous(42), sample_continuous(43));
    }

    #[test]
    fn sampled_params_satisfy_constraints_and_cover_red_range() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for seed in 0..10_000 {
            let p = sample_continuous(seed);
            p.validate().unwrap();
            let s = evaluate_gmm(&p, WavelengthGrid::default()).unwrap();
            assert!(s.values().iter().all(|v| (0.0..=DEFAULT_ALPHA).contains(v)));
            for m in &p.channels[0].centers {
                lo = lo.min(*m);
                hi = hi.max(*m);
            }
        }
        assert!((hi - lo) / 10.0 >= 0.95, "red centers cover [{lo}, {hi}]");
    }

    #[test]
    fn smoothness_of_five_band_spike() {
        let g = WavelengthGrid::new(400.0, 10.0, 5).unwrap();
        let t = SmoothnessOperator::new(5).unwrap();
        let s =
            SensitivityMatrix::from_channels(g, [&[0.0, 1.0, 0.0, 0.0, 0.0], &[0.0; 5], &[0.0; 5]])
                .unwrap();
        assert_eq!(t.apply(&s.channel(0)), vec![-2.0, 1.0, 0.0]);
        assert_eq!(smoothness_loss(&s, &t).unwrap(), 5.0);
        assert_eq!(smoothness_loss(&s.scaled(3.0), &t).unwrap(), 45.0);
    }

    #[test]
    fn affine_columns_are_smooth() {
        let g = WavelengthGrid::default();
        let t = SmoothnessOperator::new(31).unwrap();
        let ramp: Vec<f64> = (0..31).map(|i| 0.25 * i as f64 + 1.0).collect();
        let s = SensitivityMatrix::from_channels(g, [&ramp, &[2.0; 31], &ramp]).unwrap();
        assert_eq!(smoothness_loss(&s, &t).unwrap(), 0.0);
        assert!(smoothness_loss(&s, &SmoothnessOperator::new(30).unwrap()).is_err());
    }

    #[test]
    fn operator_rank_and_null_space() {
        let d = 31;
        let t = SmoothnessOperator::new(d).unwrap();
        let m = DMatrix::from_row_slice(d - 2, d, &t.matrix());
        let svd = m.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > 1e-10 * smax)
            .count();
        assert_eq!(rank, d - 2);
        let ones = DMatrix::from_element(d, 1, 1.0);
        let ramp = DMatrix::from_fn(d, 1, |i, _| i as f64);
        assert!((&m * ones).norm() == 0.0);
        assert!((&m * ramp).norm() == 0.0);
    }

    #[test]
    fn generated_curves_are_smoother_than_noise() {
        use rand::{Rng, SeedableRng};
        let t = SmoothnessOperator::new(31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut smoother = 0;
        for seed in 0..200 {
            let s = evaluate_gmm(&sample_continuous(seed), WavelengthGrid::default()).unwrap();
            let amp = s.max_value();
            let noise: Vec<f64> = (0..93).map(|_| rng.random_range(0.0..amp)).collect();
            let noise = SensitivityMatrix::new(WavelengthGrid::default(), noise).unwrap();
            if smoothness_loss(&s, &t).unwrap() < smoothness_loss(&noise, &t).unwrap() {
                smoother += 1;
            }
        }
        assert_eq!(smoother, 200);
    }

    fn table(name: &str, start: f64, step: f64, count: usize) -> RawSensitivityTable {
        let wavelengths: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
        let rgb = wavelengths
            .iter()
            .map(|w| [(w - 400.0) / 300.0, ((w - 550.0) / 80.0).cos().abs(), 0.5])
            .collect();
        RawSensitivityTable {
            name: name.into(),
            wavelengths,
            rgb,
        }
    }

    #[test]
    fn four_nm_source_interpolates_linearly() {
        let t = table("a", 400.0, 4.0, 76);
        let s = resample_table(&t, WavelengthGrid::default()).unwrap();
        // 410 nm lies halfway between samples at 408 (index 2) and 412 (index 3)
        for c in 0..3 {
            let want = 0.5 * (t.rgb[2][c] + t.rgb[3][c]);
            assert!((s.get(1, c) - want).abs() < 1e-15);
        }
        assert_eq!(s.get(0, 1), t.rgb[0][1]);
        assert_eq!(s.get(30, 0), t.rgb[75][0]);
    }

    #[test]
    fn ten_nm_source_is_truncated_past_700() {
        let t = table("b", 400.0, 10.0, 33);
        let s = resample_table(&t, WavelengthGrid::default()).unwrap();
        assert_eq!(s.bands(), 31);
        for n in 0..31 {
            for c in 0..3 {
                assert_eq!(s.get(n, c), t.rgb[n][c]);
            }
        }
    }

    #[test]
    fn ingestion_errors() {
        let short = table("short", 420.0, 10.0, 29);
        assert!(matches!(
            resample_table(&short, WavelengthGrid::default()),
            Err(Error::Ingestion(_))
        ));
        let mut bad = table("bad", 400.0, 10.0, 31);
        bad.wavelengths.swap(4, 5);
        assert!(matches!(
            resample_table(&bad, WavelengthGrid::default()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn negative_readings_are_clamped() {
        let mut t = table("neg", 400.0, 10.0, 31);
        t.rgb[3][2] = -0.01;
        let s = resample_table(&t, WavelengthGrid::default()).unwrap();
        assert_eq!(s.get(3, 2), 0.0);
    }

    #[test]
    fn camera_set_is_scaled_and_idempotent() {
        let tables = vec![table("x", 400.0, 4.0, 76), table("y", 400.0, 10.0, 33)];
        let set = load_camera_set(&tables, WavelengthGrid::default(), 0.25).unwrap();
        assert_eq!(set.len(), 2);
        let peak = set
            .functions
            .iter()
            .map(|s| s.max_value())
            .fold(0.0, f64::max);
        assert!((peak - 0.25).abs() < 1e-15);

        let again: Vec<_> = set
            .names
            .iter()
            .zip(&set.functions)
            .map(|(n, s)| parse_sensitivity_csv(n, &sensitivity_to_csv(s)).unwrap())
            .collect();
        let reloaded = load_camera_set(&again, WavelengthGrid::default(), peak).unwrap();
        assert_eq!(reloaded, set);
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let s = evaluate_gmm(&sample_continuous(5), WavelengthGrid::default()).unwrap();
        let text = sensitivity_to_csv(&s);
        assert!(text.starts_with("wavelength_nm,R,G,B\n"));
        assert_eq!(sensitivity_from_csv("s", &text).unwrap(), s);
        assert!(matches!(
            parse_sensitivity_csv("h", "lambda,R,G,B\n400,1,2,3\n"),
            Err(Error::Format { offset: 0, .. })
        ));
        match parse_sensitivity_csv("h", "wavelength_nm,R,G,B\n400,1,2\n") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fixture_set_has_forty_cameras() {
        let set = load_fixture_cameras().unwrap();
        assert_eq!(set.len(), 40);
        assert!(set
            .functions
            .iter()
            .all(|s| s.bands() == 31 && s.is_physical()));
        assert_eq!(*set.grid().unwrap(), WavelengthGrid::default());
    }

    #[test]
    fn export_contains_params_and_matrices() {
        let json = export_samples(&[1, 2], WavelengthGrid::default()).unwrap();
        let parsed: Vec<SampledSensitivity> = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].matrix.len(), 31);
        assert_eq!(parsed[1].params, sample_continuous(2));
    }
}
