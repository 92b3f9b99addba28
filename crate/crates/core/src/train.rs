//! Fitting the per-Gaussian SH gain coefficients against ground-truth
//! spectra.
//!
//! Only path gain is supervised; ToF and AoD fall out of the frozen geometry
//! and full-path rendering. Because geometry never changes, the per-ray blend
//! terms, SH bases, and distances are computed once per training pose and
//! reused every epoch; an epoch is then pure arithmetic over those caches.
//!
//! Gradients are exact: the loss is differentiated through the dB transform,
//! the blend sum, the per-term free-space factor, and the exp link of the SH
//! gain.

use crate::error::{Error, Result};
use crate::field::{GaussianField, MAX_GAIN};
use crate::metrics::{self, MetricsConfig};
use crate::render::{
    render_spectrum, spectrum_geometry, PixelGeometry, RenderMode, SpectrumGeometry,
};
use crate::sh;
use crate::spectrum::SpatialSpectrum;
use crate::trace::{free_space_gain, RxSample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

const LN10_OVER_10: f64 = std::f64::consts::LN_10 / 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared error on dB gains.
    L2Db,
    /// Mean absolute error on dB gains.
    L1Db,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Per-coefficient adaptive steps from first/second moment accumulators.
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Plain gradient descent.
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub loss: LossKind,
    /// dB floor; rendered and target gains clamp here. Negative.
    pub floor_db: f64,
    pub rng_seed: u64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Decoupled L2 decay on the non-DC SH coefficients. Directions no
    /// training ray constrains relax toward the per-Gaussian mean gain
    /// instead of ringing.
    pub weight_decay: f64,
    /// Write a checkpoint into `checkpoint_dir` every N epochs.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<std::path::PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 300,
            loss: LossKind::L2Db,
            floor_db: -160.0,
            rng_seed: 0,
            batch_size: 16,
            optimizer: Optimizer::default(),
            weight_decay: 0.0,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.floor_db < 0.0) {
            return Err(Error::invalid("dB floor must be negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight decay must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss per epoch, length = epochs.
    pub loss_trace: Vec<f64>,
    pub train_psnr_db: f64,
    pub train_ssim: f64,
    pub test_psnr_db: Option<f64>,
    pub test_ssim: Option<f64>,
    pub wall_seconds: f64,
}

fn gain_to_db(gain: f64, floor_db: f64) -> f64 {
    (10.0 * gain.log10()).max(floor_db)
}

/// Mean pixelwise loss between two spectra on dB-domain gains, both clamped
/// at the floor. Misses count as floor pixels.
pub fn loss(rendered: &SpatialSpectrum, truth: &SpatialSpectrum, cfg: &TrainConfig) -> Result<f64> {
    if rendered.grid != truth.grid {
        return Err(Error::GridMismatch(format!(
            "{} vs {}",
            rendered.grid, truth.grid
        )));
    }
    let n = rendered.grid.n_pixels() as f64;
    let total: f64 = rendered
        .pixels()
        .iter()
        .zip(truth.pixels())
        .map(|(r, t)| {
            let dr = gain_to_db(r.gain, cfg.floor_db);
            let dt = gain_to_db(t.gain, cfg.floor_db);
            match cfg.loss {
                LossKind::L2Db => (dr - dt) * (dr - dt),
                LossKind::L1Db => (dr - dt).abs(),
            }
        })
        .sum();
    Ok(total / n)
}

/// Cached per-sample training state: ray geometry plus target dB per pixel.
struct SampleCache {
    geometry: SpectrumGeometry,
    target_db: Vec<f64>,
}

fn build_cache(field: &GaussianField, sample: &RxSample, floor_db: f64) -> SampleCache {
    let geometry = spectrum_geometry(field, sample.rx_pose, sample.spectrum.grid);
    let target_db = sample
        .spectrum
        .pixels()
        .iter()
        .map(|p| gain_to_db(p.gain, floor_db))
        .collect();
    SampleCache {
        geometry,
        target_db,
    }
}

/// Forward pass over one cached pixel under a mode: (gain, per-term w_k A_k)
/// with w_k = blend_k * free-space factor.
fn pixel_forward(
    field: &GaussianField,
    px: &PixelGeometry,
    mode: RenderMode,
    lambda: f64,
    term_va: &mut Vec<(f64, f64)>,
) -> f64 {
    let log_cap = MAX_GAIN.ln();
    term_va.clear();
    let mut gain = 0.0;
    for (k, t) in px.terms.iter().enumerate() {
        let log_a = field.primitives[t.gaussian as usize].log_gain_basis(&px.basis);
        // Gain cap: contribution saturates, gradient vanishes there.
        let (a_n, da) = if log_a < log_cap {
            let a = log_a.exp();
            (a, a)
        } else {
            (MAX_GAIN, 0.0)
        };
        let w = t.blend * free_space_gain(lambda, px.term_distance(k, mode));
        term_va.push((w, da));
        gain += w * a_n;
    }
    gain
}

/// Loss (and, when `grad` is given, its gradient accumulated into the flat
/// per-coefficient buffer) for one cached sample.
fn sample_loss_grad(
    field: &GaussianField,
    cache: &SampleCache,
    mode: RenderMode,
    cfg: &TrainConfig,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let lambda = field.wavelength_m();
    let n_coeffs = sh::coeff_count(field.sh_degree);
    let n_pixels = cache.geometry.grid.n_pixels() as f64;
    let mut term_va: Vec<(f64, f64)> = Vec::new();
    let mut total = 0.0;

    for (i, px) in cache.geometry.pixels.iter().enumerate() {
        let target = cache.target_db[i];
        let Some(px) = px else {
            let d = cfg.floor_db - target;
            total += match cfg.loss {
                LossKind::L2Db => d * d,
                LossKind::L1Db => d.abs(),
            };
            continue;
        };
        let gain = pixel_forward(field, px, mode, lambda, &mut term_va);
        let rendered = gain_to_db(gain, cfg.floor_db);
        let resid = rendered - target;
        total += match cfg.loss {
            LossKind::L2Db => resid * resid,
            LossKind::L1Db => resid.abs(),
        };
        let Some(grad_buf) = grad.as_deref_mut() else {
            continue;
        };
        // Below the floor the clamp kills the gradient.
        if rendered <= cfg.floor_db {
            continue;
        }
        let dl_dr = match cfg.loss {
            LossKind::L2Db => 2.0 * resid / n_pixels,
            LossKind::L1Db => resid.signum() / n_pixels,
        };
        // d(dB)/d(gain) = 10 / (ln 10 * gain).
        let dr_dgain = 1.0 / (LN10_OVER_10 * gain);
        for (t, &(w, da)) in px.terms.iter().zip(term_va.iter()) {
            let scale = dl_dr * dr_dgain * w * da;
            let base = t.gaussian as usize * n_coeffs;
            for (j, b) in px.basis.iter().enumerate() {
                grad_buf[base + j] += scale * b;
            }
        }
    }
    total / n_pixels
}

/// Exact analytic gradient of the per-sample loss with respect to every SH
/// gain coefficient, indexed `[gaussian][coefficient]`.
pub fn grad_sh(
    field: &GaussianField,
    sample: &RxSample,
    mode: RenderMode,
    cfg: &TrainConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let n_coeffs = sh::coeff_count(field.sh_degree);
    let cache = build_cache(field, sample, cfg.floor_db);
    let mut flat = vec![0.0; field.len() * n_coeffs];
    sample_loss_grad(field, &cache, mode, cfg, Some(&mut flat));
    Ok(flat.chunks(n_coeffs).map(|c| c.to_vec()).collect())
}

/// Per-Gaussian mean view depth over all training rays whose blend includes
/// that Gaussian. Gaussians never hit fall back to the mean over hit ones
/// (0 when nothing is hit at all).
pub fn legacy_calibration(field: &GaussianField, samples: &[&RxSample]) -> Vec<f64> {
    let geoms: Vec<SpectrumGeometry> = samples
        .par_iter()
        .map(|s| spectrum_geometry(field, s.rx_pose, s.spectrum.grid))
        .collect();
    calibration_from_geometries(field.len(), &geoms)
}

pub(crate) fn calibration_from_geometries(
    n_gaussians: usize,
    geometries: &[SpectrumGeometry],
) -> Vec<f64> {
    let mut sum = vec![0.0f64; n_gaussians];
    let mut count = vec![0u64; n_gaussians];
    for geom in geometries {
        for px in geom.pixels.iter().flatten() {
            for t in &px.terms {
                sum[t.gaussian as usize] += t.view_depth;
                count[t.gaussian as usize] += 1;
            }
        }
    }
    let hit_means: Vec<f64> = sum
        .iter()
        .zip(&count)
        .filter(|(_, &c)| c > 0)
        .map(|(&s, &c)| s / c as f64)
        .collect();
    let fallback = if hit_means.is_empty() {
        0.0
    } else {
        hit_means.iter().sum::<f64>() / hit_means.len() as f64
    };
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { fallback })
        .collect()
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Trains the SH gain coefficients of `field` on `samples`; geometry is
/// untouched. Deterministic for a fixed seed: batches shuffle with the seeded
/// RNG and gradients accumulate in sample order. `test` samples, when given,
/// only feed the report metrics.
pub fn train(
    field: &GaussianField,
    samples: &[&RxSample],
    cfg: &TrainConfig,
    mode: RenderMode,
    test: Option<&[&RxSample]>,
) -> Result<(GaussianField, TrainReport)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if field.is_empty() {
        return Err(Error::invalid("field has no primitives"));
    }
    let start = Instant::now();
    let mut field = field.clone();
    let n_coeffs = sh::coeff_count(field.sh_degree);
    let n_params = field.len() * n_coeffs;

    let caches: Vec<SampleCache> = samples
        .par_iter()
        .map(|s| build_cache(&field, s, cfg.floor_db))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..caches.len()).collect();
    let mut adam = AdamState {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // Per-sample gradients in parallel, reduced in fixed order.
            let parts: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&si| {
                    let mut g = vec![0.0; n_params];
                    let l = sample_loss_grad(&field, &caches[si], mode, cfg, Some(&mut g));
                    (l, g)
                })
                .collect();
            let inv = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; n_params];
            let mut batch_loss = 0.0;
            for (l, g) in &parts {
                batch_loss += l;
                for (acc, x) in grad.iter_mut().zip(g) {
                    *acc += x;
                }
            }
            batch_loss *= inv;
            for g in grad.iter_mut() {
                *g *= inv;
            }
            epoch_loss += batch_loss * batch.len() as f64;

            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            step(&mut field, &grad, cfg, &mut adam, n_coeffs);
        }
        epoch_loss /= caches.len() as f64;
        loss_trace.push(epoch_loss);

        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, cfg.checkpoint_dir.as_ref()) {
            if every > 0 && (epoch + 1) % every == 0 {
                let path = dir.join(format!("epoch_{:05}.rrf", epoch + 1));
                crate::io::save_checkpoint(&field, &path)?;
            }
        }
    }

    // Report metrics on the final coefficients.
    let mcfg = MetricsConfig {
        floor_db: cfg.floor_db,
        ..Default::default()
    };
    let (train_psnr_db, train_ssim) = render_and_score(&field, samples, mode, &mcfg)?;
    let (test_psnr_db, test_ssim) = match test {
        Some(t) if !t.is_empty() => {
            let (p, s) = render_and_score(&field, t, mode, &mcfg)?;
            (Some(p), Some(s))
        }
        _ => (None, None),
    };

    Ok((
        field,
        TrainReport {
            loss_trace,
            train_psnr_db,
            train_ssim,
            test_psnr_db,
            test_ssim,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

fn step(
    field: &mut GaussianField,
    grad: &[f64],
    cfg: &TrainConfig,
    adam: &mut AdamState,
    n_coeffs: usize,
) {
    let decay = cfg.learning_rate * cfg.weight_decay;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (gi, g) in field.primitives.iter_mut().enumerate() {
                let base = gi * n_coeffs;
                for (j, c) in g.gain_sh.coeffs_mut().iter_mut().enumerate() {
                    *c -= cfg.learning_rate * grad[base + j];
                    if j > 0 {
                        *c -= decay * *c;
                    }
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            adam.t += 1;
            let bc1 = 1.0 - beta1.powi(adam.t as i32);
            let bc2 = 1.0 - beta2.powi(adam.t as i32);
            for (gi, g) in field.primitives.iter_mut().enumerate() {
                let base = gi * n_coeffs;
                for (j, c) in g.gain_sh.coeffs_mut().iter_mut().enumerate() {
                    let i = base + j;
                    adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * grad[i];
                    adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let mh = adam.m[i] / bc1;
                    let vh = adam.v[i] / bc2;
                    *c -= cfg.learning_rate * mh / (vh.sqrt() + eps);
                    if j > 0 {
                        *c -= decay * *c;
                    }
                }
            }
        }
    }
}

fn render_and_score(
    field: &GaussianField,
    samples: &[&RxSample],
    mode: RenderMode,
    mcfg: &MetricsConfig,
) -> Result<(f64, f64)> {
    let rendered: Vec<SpatialSpectrum> = samples
        .iter()
        .map(|s| render_spectrum(field, s.rx_pose, s.spectrum.grid, mode))
        .collect();
    let truth: Vec<SpatialSpectrum> = samples.iter().map(|s| s.spectrum.clone()).collect();
    // Shrink the SSIM window for grids smaller than the configured one.
    let grid = samples[0].spectrum.grid;
    let mut window = mcfg.ssim_window.min(grid.n_el).min(grid.n_az);
    if window % 2 == 0 {
        window -= 1;
    }
    let mcfg = MetricsConfig {
        ssim_window: window.max(1),
        ..*mcfg
    };
    let report = metrics::evaluate(&rendered, &truth, &mcfg)?;
    Ok((report.psnr_mean_db, report.ssim_mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{GaussianPrimitive, SeedParams};
    use crate::geom::{RotationQ, UnitDir};
    use crate::grid::SphericalGrid;
    use crate::render::render_spectrum_oracle;
    use crate::scene::{Facet, Material, SamplingVolume, Scene};
    use crate::sh::ShCoeffs;
    use crate::spectrum::{RxPose, SpectrumPixel};
    use crate::trace::generate_dataset;
    use nalgebra::{Point3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            ..Default::default()
        }
    }

    fn spectrum_of(grid: SphericalGrid, pose: RxPose, hits: &[(usize, usize, f64)]) -> SpatialSpectrum {
        let mut s = SpatialSpectrum::empty(grid, pose);
        for &(row, col, gain) in hits {
            *s.pixel_mut(row, col) = SpectrumPixel {
                gain,
                tof_s: 1e-9,
                aod_az: 0.0,
                aod_el: 0.0,
            };
        }
        s
    }

    fn gaussian(center: Point3<f64>, sigma: f64, density: f64) -> GaussianPrimitive {
        GaussianPrimitive {
            center,
            scale: Vector3::new(sigma, sigma, sigma),
            rotation: RotationQ::identity(),
            base_density: density,
            gain_sh: ShCoeffs::zeros(3).unwrap(),
        }
    }

    /// Random micro-configuration: a few Gaussians near the +x axis, a tiny
    /// grid, and a synthetic target spectrum.
    fn micro_config(rng: &mut impl Rng, max_gaussians: usize) -> (GaussianField, RxSample) {
        let n = rng.gen_range(1..=max_gaussians);
        let mut prims = Vec::new();
        for _ in 0..n {
            let mut g = gaussian(
                Point3::new(
                    rng.gen_range(2.0..6.0),
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.8..0.8),
                ),
                rng.gen_range(0.2..0.6),
                rng.gen_range(0.3..1.5),
            );
            for c in g.gain_sh.coeffs_mut() {
                *c = rng.gen_range(-0.3..0.3);
            }
            prims.push(g);
        }
        let field = GaussianField {
            primitives: prims,
            tx_position: Point3::new(0.0, 4.0, 1.0),
            carrier_frequency_hz: 3.0e11,
            sh_degree: 3,
        };
        let grid = SphericalGrid::new(2, 2).unwrap();
        let pose = RxPose::at(Point3::new(0.0, 0.0, 0.0));
        // Target: the oracle render of the field, perturbed per pixel, so
        // rendered values sit near but not on the target.
        let rendered = render_spectrum_oracle(&field, pose, grid, RenderMode::FullPath);
        let mut truth = SpatialSpectrum::empty(grid, pose);
        for row in 0..grid.n_el {
            for col in 0..grid.n_az {
                let px = rendered.pixel(row, col);
                if px.is_hit() {
                    *truth.pixel_mut(row, col) = SpectrumPixel {
                        gain: px.gain * rng.gen_range(0.2..5.0),
                        ..*px
                    };
                }
            }
        }
        let sample = RxSample {
            rx_pose: pose,
            mpcs: vec![],
            spectrum: truth,
        };
        (field, sample)
    }

    fn loss_of(field: &GaussianField, sample: &RxSample, cfg: &TrainConfig) -> f64 {
        let rendered = render_spectrum_oracle(
            field,
            sample.rx_pose,
            sample.spectrum.grid,
            RenderMode::FullPath,
        );
        loss(&rendered, &sample.spectrum, cfg).unwrap()
    }

    #[test]
    fn loss_identical_spectra_is_zero() {
        let grid = SphericalGrid::new(4, 8).unwrap();
        let pose = RxPose::at(Point3::new(0.0, 0.0, 0.0));
        let s = spectrum_of(grid, pose, &[(1, 2, 1e-9), (3, 4, 2e-10)]);
        assert_eq!(loss(&s, &s, &quick_cfg()).unwrap(), 0.0);
    }

    #[test]
    fn loss_ten_db_single_pixel() {
        let grid = SphericalGrid::new(10, 10).unwrap();
        let pose = RxPose::at(Point3::new(0.0, 0.0, 0.0));
        let a = spectrum_of(grid, pose, &[(0, 0, 1e-9)]);
        let b = spectrum_of(grid, pose, &[(0, 0, 1e-8)]);
        let l = loss(&a, &b, &quick_cfg()).unwrap();
        assert!((l - 1.0).abs() < 1e-9, "loss {l}");
    }

    #[test]
    fn loss_all_miss_is_zero() {
        let grid = SphericalGrid::new(4, 8).unwrap();
        let pose = RxPose::at(Point3::new(0.0, 0.0, 0.0));
        let a = SpatialSpectrum::empty(grid, pose);
        assert_eq!(loss(&a, &a, &quick_cfg()).unwrap(), 0.0);
    }

    #[test]
    fn loss_grid_mismatch_errors() {
        let pose = RxPose::at(Point3::new(0.0, 0.0, 0.0));
        let a = SpatialSpectrum::empty(SphericalGrid::new(4, 8).unwrap(), pose);
        let b = SpatialSpectrum::empty(SphericalGrid::new(4, 9).unwrap(), pose);
        assert!(loss(&a, &b, &quick_cfg()).is_err());
    }

    #[test]
    fn gradient_zero_for_unseen_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut field, sample) = micro_config(&mut rng, 2);
        // A Gaussian far off every ray of the 2x2 grid towards +x.
        field
            .primitives
            .push(gaussian(Point3::new(-50.0, 0.0, 0.0), 0.1, 1.0));
        let g = grad_sh(&field, &sample, RenderMode::FullPath, &quick_cfg()).unwrap();
        let last = g.last().unwrap();
        assert!(last.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = quick_cfg();
        for _ in 0..5 {
            let (field, sample) = micro_config(&mut rng, 3);
            let analytic = grad_sh(&field, &sample, RenderMode::FullPath, &cfg).unwrap();
            let h = 1e-4;
            for gi in 0..field.len() {
                for j in 0..analytic[gi].len() {
                    let mut plus = field.clone();
                    plus.primitives[gi].gain_sh.coeffs_mut()[j] += h;
                    let mut minus = field.clone();
                    minus.primitives[gi].gain_sh.coeffs_mut()[j] -= h;
                    let fd = (loss_of(&plus, &sample, &cfg) - loss_of(&minus, &sample, &cfg))
                        / (2.0 * h);
                    let a = analytic[gi][j];
                    let denom = a.abs().max(fd.abs()).max(1e-12);
                    assert!(
                        (a - fd).abs() / denom <= 1e-4,
                        "gaussian {gi} coeff {j}: analytic {a} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_scales_linearly_with_residual() {
        // L2 gradient is linear in the dB residual: doubling the pixel's
        // residual doubles its gradient contribution.
        let field = GaussianField {
            primitives: vec![gaussian(Point3::new(4.0, 0.0, 0.0), 0.4, 0.8)],
            tx_position: Point3::new(0.0, 3.0, 0.0),
            carrier_frequency_hz: 3.0e11,
            sh_degree: 3,
        };
        let grid = SphericalGrid::new(1, 1).unwrap();
        let pose = RxPose::at(Point3::new(0.0, 0.0, 0.0));
        let rendered = render_spectrum_oracle(&field, pose, grid, RenderMode::FullPath);
        let g0 = rendered.pixel(0, 0).gain;
        assert!(g0 > 0.0);
        let cfg = quick_cfg();
        // Targets 2 dB and 4 dB below the rendered value.
        let mk = |db: f64| RxSample {
            rx_pose: pose,
            mpcs: vec![],
            spectrum: spectrum_of(grid, pose, &[(0, 0, g0 * 10f64.powf(-db / 10.0))]),
        };
        let g2 = grad_sh(&field, &mk(2.0), RenderMode::FullPath, &cfg).unwrap();
        let g4 = grad_sh(&field, &mk(4.0), RenderMode::FullPath, &cfg).unwrap();
        for (a, b) in g2[0].iter().zip(&g4[0]) {
            if a.abs() > 1e-15 {
                assert!((b / a - 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_unknown_regression_converges() {
        let field = GaussianField {
            primitives: vec![gaussian(Point3::new(5.0, 0.0, 0.0), 0.4, 0.9)],
            tx_position: Point3::new(0.0, 4.0, 0.0),
            carrier_frequency_hz: 3.0e11,
            sh_degree: 3,
        };
        let grid = SphericalGrid::new(1, 1).unwrap();
        let pose = RxPose::at(Point3::new(0.0, 0.0, 0.0));
        let target_gain = 10f64.powf(-9.5); // -95 dB
        let sample = RxSample {
            rx_pose: pose,
            mpcs: vec![],
            spectrum: spectrum_of(grid, pose, &[(0, 0, target_gain)]),
        };
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            batch_size: 1,
            ..Default::default()
        };
        let (trained, report) =
            train(&field, &[&sample], &cfg, RenderMode::FullPath, None).unwrap();
        assert_eq!(report.loss_trace.len(), 500);
        let rendered = render_spectrum_oracle(&trained, pose, grid, RenderMode::FullPath);
        let err_db = (10.0 * rendered.pixel(0, 0).gain.log10()
            - 10.0 * target_gain.log10())
        .abs();
        assert!(err_db <= 1.0, "converged to within {err_db} dB");
        // Equivalently the decoded gain at the training direction matches the
        // implied optimum.
        let d = pose.pixel_dir_world(&grid, 0, 0);
        let implied = target_gain / (rendered.pixel(0, 0).gain
            / trained.primitives[0].decoded_gain(&d));
        let a_err_db =
            (10.0 * trained.primitives[0].decoded_gain(&d).log10() - 10.0 * implied.log10()).abs();
        assert!(a_err_db <= 1.0);
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (field, sample) = micro_config(&mut rng, 2);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(train(&field, &[&sample], &cfg, RenderMode::FullPath, None).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (field, s1) = micro_config(&mut rng, 3);
        let (_, s2) = micro_config(&mut rng, 3);
        let samples = [&s1, &s2];
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 1,
            rng_seed: 7,
            ..Default::default()
        };
        let (fa, ra) = train(&field, &samples, &cfg, RenderMode::FullPath, None).unwrap();
        let (fb, rb) = train(&field, &samples, &cfg, RenderMode::FullPath, None).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(ra.loss_trace, rb.loss_trace);
        assert_eq!(ra.train_psnr_db, rb.train_psnr_db);
        assert_eq!(ra.train_ssim, rb.train_ssim);
    }

    #[test]
    fn geometry_is_frozen_by_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (field, sample) = micro_config(&mut rng, 4);
        let cfg = TrainConfig {
            epochs: 10,
            ..Default::default()
        };
        let (trained, _) = train(&field, &[&sample], &cfg, RenderMode::FullPath, None).unwrap();
        for (a, b) in field.primitives.iter().zip(&trained.primitives) {
            assert_eq!(a.center, b.center);
            assert_eq!(a.scale, b.scale);
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.base_density, b.base_density);
        }
    }

    #[test]
    fn calibration_means_and_fallback() {
        // One Gaussian seen at view depths 1 m and 3 m, one never seen.
        let field = GaussianField {
            primitives: vec![
                gaussian(Point3::new(5.0, 0.0, 0.0), 0.3, 0.8),
                gaussian(Point3::new(-50.0, 0.0, 0.0), 0.1, 0.8),
            ],
            tx_position: Point3::new(0.0, 4.0, 0.0),
            carrier_frequency_hz: 3.0e11,
            sh_degree: 3,
        };
        let grid = SphericalGrid::new(1, 1).unwrap();
        let mk = |x: f64| RxSample {
            rx_pose: RxPose::at(Point3::new(x, 0.0, 0.0)),
            mpcs: vec![],
            spectrum: SpatialSpectrum::empty(grid, RxPose::at(Point3::new(x, 0.0, 0.0))),
        };
        let (s1, s3) = (mk(4.0), mk(2.0)); // depths 1 and 3
        let cal = legacy_calibration(&field, &[&s1, &s3]);
        assert!((cal[0] - 2.0).abs() < 1e-12, "mean of 1 and 3");
        // Fallback: mean over hit Gaussians.
        assert!((cal[1] - 2.0).abs() < 1e-12);
        // Single-sample calibration equals that sample's depth.
        let cal1 = legacy_calibration(&field, &[&s1]);
        assert!((cal1[0] - 1.0).abs() < 1e-12);
    }

    fn smoke_scene() -> Scene {
        Scene {
            materials: vec![Material {
                name: "plaster".into(),
                scattering_coefficient: 0.6,
                lobe_exponent: 4,
                reflection_reduction: 0.7,
            }],
            facets: vec![Facet::new(
                [
                    Point3::new(-2.0, 3.0, -1.5),
                    Point3::new(4.0, 3.0, 0.0),
                    Point3::new(-2.0, 3.0, 1.5),
                ],
                0,
            )
            .unwrap()],
            tx_position: Point3::new(0.0, 0.0, 0.5),
            carrier_frequency_hz: 3.0e11,
            sampling_volume: SamplingVolume {
                min: Point3::new(-1.0, 0.2, -0.5),
                max: Point3::new(1.5, 2.0, 1.0),
            },
            trace_spacing_m: 0.3,
        }
    }

    #[test]
    fn loss_trend_is_downward_on_smoke_scene() {
        let scene = smoke_scene();
        let grid = SphericalGrid::new(8, 16).unwrap();
        let dataset = generate_dataset(&scene, 6, grid, 5);
        let samples: Vec<&RxSample> = dataset.samples.iter().collect();
        let field = GaussianField::seed_from_scene(
            &scene,
            &SeedParams {
                spacing_m: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 6,
            rng_seed: 11,
            ..Default::default()
        };
        let (_, report) = train(&field, &samples, &cfg, RenderMode::FullPath, None).unwrap();
        // Median loss over successive 10-epoch windows must not increase.
        let medians: Vec<f64> = report
            .loss_trace
            .chunks(10)
            .map(|w| {
                let mut v = w.to_vec();
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            })
            .collect();
        for pair in medians.windows(2) {
            assert!(
                pair[1] <= pair[0] * 1.0001,
                "median loss rose: {medians:?}"
            );
        }
        // Training reproduces its own training pixels reasonably well.
        let (trained, _) = train(
            &field,
            &samples,
            &TrainConfig {
                learning_rate: 0.05,
                epochs: 400,
                batch_size: 6,
                rng_seed: 11,
                ..Default::default()
            },
            RenderMode::FullPath,
            None,
        )
        .unwrap();
        let rendered = render_spectrum(&trained, samples[0].rx_pose, grid, RenderMode::FullPath);
        let truth = &samples[0].spectrum;
        let mut err_sum = 0.0;
        let mut count = 0;
        for (r, t) in rendered.pixels().iter().zip(truth.pixels()) {
            if r.is_hit() && t.is_hit() {
                err_sum += (10.0 * r.gain.log10() - 10.0 * t.gain.log10()).abs();
                count += 1;
            }
        }
        assert!(count > 0);
        let mean_err_db = err_sum / count as f64;
        assert!(mean_err_db < 3.0, "closure error {mean_err_db} dB");
    }
}
