//! Training-size sweep: trains full-path and legacy variants from identical
//! seeds over increasing training subsets and scores both against one held-out
//! test set.

use crate::error::{Error, Result};
use crate::field::{GaussianField, SeedParams};
use crate::grid::SphericalGrid;
use crate::metrics::{self, MetricReport, MetricsConfig};
use crate::render::{render_spectrum, RenderMode};
use crate::scene::Scene;
use crate::spectrum::SpatialSpectrum;
use crate::trace::{generate_dataset, split_test_train, RxSample};
use crate::train::{legacy_calibration, train, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    FullPath,
    Legacy,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::FullPath => write!(f, "full_path"),
            Variant::Legacy => write!(f, "legacy"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    pub variant: Variant,
    pub psnr_mean_db: f64,
    pub psnr_min_db: f64,
    pub psnr_max_db: f64,
    pub ssim_mean: f64,
    pub ssim_min: f64,
    pub ssim_max: f64,
    pub train_seconds: f64,
}

/// One trained variant with everything needed to re-render it.
#[derive(Debug, Clone)]
pub struct TrainedVariant {
    pub size: usize,
    pub variant: Variant,
    pub field: GaussianField,
    /// Per-Gaussian calibration depths (legacy variants only).
    pub calibration: Option<Vec<f64>>,
    pub report: TrainReport,
    pub eval: MetricReport,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub trained: Vec<TrainedVariant>,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Training subset sizes (nested prefixes of the shuffled pool).
    pub sizes: Vec<usize>,
    pub test_size: usize,
    /// Total receiver draws; defaults to test_size + max(sizes).
    pub n_rx: Option<usize>,
    pub grid: SphericalGrid,
    pub dataset_seed: u64,
    pub seed_params: SeedParams,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
}

/// Runs the sweep. Deterministic for fixed seeds (timing columns aside).
pub fn sweep(scene: &Scene, cfg: &SweepConfig) -> Result<SweepOutcome> {
    if cfg.sizes.is_empty() {
        return Err(Error::invalid("sweep needs at least one training size"));
    }
    let max_size = *cfg.sizes.iter().max().unwrap();
    let n_rx = cfg.n_rx.unwrap_or(cfg.test_size + max_size);
    if n_rx < cfg.test_size + max_size {
        return Err(Error::invalid(format!(
            "dataset of {n_rx} cannot hold {} test + {max_size} training samples",
            cfg.test_size
        )));
    }

    let dataset = generate_dataset(scene, n_rx, cfg.grid, cfg.dataset_seed);
    let (test, pool) = split_test_train(&dataset, cfg.test_size)?;
    let base_field = GaussianField::seed_from_scene(scene, &cfg.seed_params)?;

    let truth: Vec<SpatialSpectrum> = test.iter().map(|s| s.spectrum.clone()).collect();
    let mut rows = Vec::new();
    let mut trained = Vec::new();

    for &size in &cfg.sizes {
        if size > pool.len() {
            return Err(Error::invalid(format!(
                "training size {size} exceeds pool of {}",
                pool.len()
            )));
        }
        let train_set: Vec<&RxSample> = pool[..size].to_vec();

        for variant in [Variant::FullPath, Variant::Legacy] {
            let calibration = match variant {
                Variant::FullPath => None,
                Variant::Legacy => Some(legacy_calibration(&base_field, &train_set)),
            };
            let mode = match &calibration {
                None => RenderMode::FullPath,
                Some(cal) => RenderMode::Legacy(cal),
            };
            let (field, report) = train(&base_field, &train_set, &cfg.train, mode, Some(&test))?;
            let rendered: Vec<SpatialSpectrum> = test
                .iter()
                .map(|s| render_spectrum(&field, s.rx_pose, cfg.grid, mode))
                .collect();
            let eval = metrics::evaluate(&rendered, &truth, &cfg.metrics)?;
            rows.push(SweepRow {
                size,
                variant,
                psnr_mean_db: eval.psnr_mean_db,
                psnr_min_db: eval.psnr_min_db,
                psnr_max_db: eval.psnr_max_db,
                ssim_mean: eval.ssim_mean,
                ssim_min: eval.ssim_min,
                ssim_max: eval.ssim_max,
                train_seconds: report.wall_seconds,
            });
            trained.push(TrainedVariant {
                size,
                variant,
                field,
                calibration,
                report,
                eval,
            });
        }
    }

    Ok(SweepOutcome { rows, trained })
}

/// Tab-separated sweep table with a header row.
pub fn sweep_table_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "size\tvariant\tpsnr_mean\tpsnr_min\tpsnr_max\tssim_mean\tssim_min\tssim_max\ttrain_seconds\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.6}\t{:.6}\t{:.6}\t{:.3}\n",
            r.size,
            r.variant,
            r.psnr_mean_db,
            r.psnr_min_db,
            r.psnr_max_db,
            r.ssim_mean,
            r.ssim_min,
            r.ssim_max,
            r.train_seconds
        ));
    }
    out
}
