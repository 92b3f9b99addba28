//! Spectrum-reconstruction quality metrics.
//!
//! Spectra are compared as dB images over a declared dynamic range: gains are
//! clamped to [floor, 0] dB and shifted to dB-above-floor, so pixel values
//! span [0, R] with R = -floor (160 dB by default). Miss pixels sit at the
//! floor.

use crate::error::{Error, Result};
use crate::spectrum::SpatialSpectrum;

pub const PSNR_CAP_DB: f64 = 100.0;

/// Metric configuration shared by evaluation and the sweep harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// dB floor for gains (misses clamp here). Must be negative.
    pub floor_db: f64,
    /// SSIM window side length, odd.
    pub ssim_window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            floor_db: -160.0,
            ssim_window: 7,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl MetricsConfig {
    pub fn dynamic_range(&self) -> f64 {
        -self.floor_db
    }
}

/// A single-channel image of dB-above-floor values.
#[derive(Debug, Clone, PartialEq)]
pub struct DbImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DbImage {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        DbImage { rows, cols, data }
    }

    fn same_dims(&self, other: &DbImage) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::GridMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Gain channel of a spectrum as dB above the floor, clamped to [0, R].
pub fn spectrum_to_db(spectrum: &SpatialSpectrum, floor_db: f64) -> DbImage {
    let data = spectrum
        .pixels()
        .iter()
        .map(|p| {
            let db = 10.0 * p.gain.log10();
            db.clamp(floor_db, 0.0) - floor_db
        })
        .collect();
    DbImage::new(spectrum.grid.n_el, spectrum.grid.n_az, data)
}

/// Peak signal-to-noise ratio, 10 log10(R^2 / MSE), capped at
/// [`PSNR_CAP_DB`] for identical images.
pub fn psnr(a: &DbImage, b: &DbImage, dynamic_range: f64) -> Result<f64> {
    a.same_dims(b)?;
    if !(dynamic_range > 0.0) {
        return Err(Error::invalid("dynamic range must be positive"));
    }
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (dynamic_range * dynamic_range / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean structural similarity over all fully contained square windows,
/// with stabilizers C1 = (k1 R)^2, C2 = (k2 R)^2.
pub fn ssim(a: &DbImage, b: &DbImage, cfg: &MetricsConfig) -> Result<f64> {
    a.same_dims(b)?;
    let w = cfg.ssim_window;
    if w % 2 == 0 || w == 0 {
        return Err(Error::invalid("SSIM window must be odd"));
    }
    if w > a.rows || w > a.cols {
        return Err(Error::invalid(format!(
            "SSIM window {w} exceeds image {}x{}",
            a.rows, a.cols
        )));
    }
    let r = cfg.dynamic_range();
    let c1 = (cfg.k1 * r) * (cfg.k1 * r);
    let c2 = (cfg.k2 * r) * (cfg.k2 * r);
    let n = (w * w) as f64;

    let mut total = 0.0;
    let mut windows = 0usize;
    for row0 in 0..=(a.rows - w) {
        for col0 in 0..=(a.cols - w) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for row in row0..row0 + w {
                let base = row * a.cols;
                for col in col0..col0 + w {
                    let x = a.data[base + col];
                    let y = b.data[base + col];
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let mu_a = sa / n;
            let mu_b = sb / n;
            let var_a = saa / n - mu_a * mu_a;
            let var_b = sbb / n - mu_b * mu_b;
            let cov = sab / n - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Per-sample spectrum metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
    /// Angle between predicted and true top-1 beam directions, degrees.
    /// `None` when either spectrum is all-miss.
    pub beam_aoa_error_deg: Option<f64>,
    /// Top-1 beam within one grid bin of the truth (azimuth wraps).
    pub beam_within_one_bin: bool,
}

/// Aggregate report over a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr_mean_db: f64,
    pub psnr_min_db: f64,
    pub psnr_max_db: f64,
    pub ssim_mean: f64,
    pub ssim_min: f64,
    pub ssim_max: f64,
    /// Mean top-1 AoA error over samples where both spectra have hits.
    pub beam_aoa_error_mean_deg: f64,
    /// Fraction of samples whose top-1 beam lands within one grid bin.
    pub beam_hit_rate: f64,
    pub per_sample: Vec<SampleMetrics>,
}

fn within_one_bin(a: (usize, usize), b: (usize, usize), n_az: usize) -> bool {
    let drow = a.0.abs_diff(b.0);
    let dcol_raw = a.1.abs_diff(b.1);
    let dcol = dcol_raw.min(n_az - dcol_raw);
    drow <= 1 && dcol <= 1
}

pub fn compare_sample(
    pred: &SpatialSpectrum,
    truth: &SpatialSpectrum,
    cfg: &MetricsConfig,
) -> Result<SampleMetrics> {
    if pred.grid != truth.grid {
        return Err(Error::GridMismatch(format!(
            "{} vs {}",
            pred.grid, truth.grid
        )));
    }
    let a = spectrum_to_db(pred, cfg.floor_db);
    let b = spectrum_to_db(truth, cfg.floor_db);
    let psnr_db = psnr(&a, &b, cfg.dynamic_range())?;
    let ssim_v = ssim(&a, &b, cfg)?;
    let (beam_aoa_error_deg, beam_within_one_bin) =
        match (pred.argmax_gain(), truth.argmax_gain()) {
            (Some(p), Some(t)) => {
                let dp = pred.rx_pose.pixel_dir_world(&pred.grid, p.0, p.1);
                let dt = truth.rx_pose.pixel_dir_world(&truth.grid, t.0, t.1);
                (
                    Some(dp.angle_to(&dt).to_degrees()),
                    within_one_bin(p, t, pred.grid.n_az),
                )
            }
            (None, None) => (None, true),
            _ => (None, false),
        };
    Ok(SampleMetrics {
        psnr_db,
        ssim: ssim_v,
        beam_aoa_error_deg,
        beam_within_one_bin,
    })
}

/// Compares prediction/truth pairs elementwise and aggregates.
pub fn evaluate(
    pred: &[SpatialSpectrum],
    truth: &[SpatialSpectrum],
    cfg: &MetricsConfig,
) -> Result<MetricReport> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "sample count mismatch: {} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty sample set"));
    }
    let per_sample: Vec<SampleMetrics> = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| compare_sample(p, t, cfg))
        .collect::<Result<_>>()?;

    let n = per_sample.len() as f64;
    let psnr_mean = per_sample.iter().map(|s| s.psnr_db).sum::<f64>() / n;
    let ssim_mean = per_sample.iter().map(|s| s.ssim).sum::<f64>() / n;
    let aoa: Vec<f64> = per_sample
        .iter()
        .filter_map(|s| s.beam_aoa_error_deg)
        .collect();
    let beam_aoa_error_mean_deg = if aoa.is_empty() {
        f64::NAN
    } else {
        aoa.iter().sum::<f64>() / aoa.len() as f64
    };
    let hit_rate =
        per_sample.iter().filter(|s| s.beam_within_one_bin).count() as f64 / n;
    Ok(MetricReport {
        psnr_mean_db: psnr_mean,
        psnr_min_db: per_sample.iter().map(|s| s.psnr_db).fold(f64::INFINITY, f64::min),
        psnr_max_db: per_sample
            .iter()
            .map(|s| s.psnr_db)
            .fold(f64::NEG_INFINITY, f64::max),
        ssim_mean,
        ssim_min: per_sample.iter().map(|s| s.ssim).fold(f64::INFINITY, f64::min),
        ssim_max: per_sample
            .iter()
            .map(|s| s.ssim)
            .fold(f64::NEG_INFINITY, f64::max),
        beam_aoa_error_mean_deg,
        beam_hit_rate: hit_rate,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> DbImage {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DbImage::new(rows, cols, data)
    }

    fn textured(rows: usize, cols: usize, seed: u64) -> DbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        image(rows, cols, |_, _| rng.gen_range(0.0..160.0))
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let a = textured(8, 16, 1);
        assert_eq!(psnr(&a, &a, 160.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_constant_offset_closed_form() {
        let r = 160.0;
        let a = image(10, 10, |_, _| 40.0);
        let b = image(10, 10, |_, _| 40.0 + r / 2.0);
        let p = psnr(&a, &b, r).unwrap();
        assert!((p - 6.0206).abs() < 1e-3, "psnr {p}");
    }

    #[test]
    fn psnr_translation_invariant() {
        let a = textured(8, 16, 2);
        let b = textured(8, 16, 3);
        let shift = 12.5;
        let a2 = DbImage::new(8, 16, a.data.iter().map(|v| v + shift).collect());
        let b2 = DbImage::new(8, 16, b.data.iter().map(|v| v + shift).collect());
        let p1 = psnr(&a, &b, 160.0).unwrap();
        let p2 = psnr(&a2, &b2, 160.0).unwrap();
        assert!((p1 - p2).abs() < 1e-9);
    }

    #[test]
    fn psnr_dimension_mismatch_errors() {
        let a = textured(8, 16, 4);
        let b = textured(8, 15, 5);
        assert!(psnr(&a, &b, 160.0).is_err());
    }

    #[test]
    fn ssim_identity_is_one() {
        let a = textured(9, 18, 6);
        let cfg = MetricsConfig::default();
        let s = ssim(&a, &a, &cfg).unwrap();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = textured(9, 18, 7);
        let b = textured(9, 18, 8);
        let cfg = MetricsConfig::default();
        let ab = ssim(&a, &b, &cfg).unwrap();
        let ba = ssim(&b, &a, &cfg).unwrap();
        assert!((ab - ba).abs() <= 1e-12);
    }

    #[test]
    fn ssim_negation_about_midpoint_is_negative() {
        let a = textured(9, 18, 9);
        let b = DbImage::new(9, 18, a.data.iter().map(|v| 160.0 - v).collect());
        let cfg = MetricsConfig::default();
        assert!(ssim(&a, &b, &cfg).unwrap() < 0.0);
    }

    #[test]
    fn ssim_detects_perturbation() {
        let a = textured(9, 18, 10);
        let mut b = a.clone();
        b.data[40] += 5.0;
        let cfg = MetricsConfig::default();
        assert!(ssim(&a, &b, &cfg).unwrap() < 1.0 - 1e-9);
    }

    #[test]
    fn ssim_even_window_rejected() {
        let a = textured(9, 18, 11);
        let cfg = MetricsConfig {
            ssim_window: 6,
            ..Default::default()
        };
        assert!(ssim(&a, &a, &cfg).is_err());
    }

    #[test]
    fn within_one_bin_wraps_azimuth() {
        assert!(within_one_bin((2, 0), (2, 15), 16));
        assert!(within_one_bin((2, 15), (3, 0), 16));
        assert!(!within_one_bin((2, 0), (2, 2), 16));
        assert!(!within_one_bin((0, 4), (2, 4), 16));
    }

    #[test]
    fn spectrum_db_clamps_misses_to_floor() {
        use crate::grid::SphericalGrid;
        use crate::spectrum::{RxPose, SpatialSpectrum, SpectrumPixel};
        use nalgebra::Point3;
        let grid = SphericalGrid::new(2, 4).unwrap();
        let mut s = SpatialSpectrum::empty(grid, RxPose::at(Point3::new(0.0, 0.0, 0.0)));
        *s.pixel_mut(0, 0) = SpectrumPixel {
            gain: 1e-8, // -80 dB
            tof_s: 1e-9,
            aod_az: 0.0,
            aod_el: 0.0,
        };
        let img = spectrum_to_db(&s, -160.0);
        assert!((img.data[0] - 80.0).abs() < 1e-9);
        // Misses land exactly at the floor (0 above floor).
        assert_eq!(img.data[1], 0.0);
    }
}
