//! Multipath components and the receiver-side spatial spectrum ("RF image").

use crate::geom::{RotationQ, UnitDir};
use crate::grid::SphericalGrid;
use nalgebra::Point3;

/// One multipath component: amplitude (linear power gain), phase, delay, and
/// the arrival/departure geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpc {
    /// Linear power gain alpha_l (dimensionless, >= 0).
    pub gain: f64,
    /// Phase shift phi_l, radians in [0, 2pi).
    pub phase_rad: f64,
    /// Delay tau_l, seconds.
    pub delay_s: f64,
    /// Arrival direction at the Rx, pointing from the Rx towards the last
    /// interaction point (or the Tx for line of sight).
    pub aoa: UnitDir,
    /// Departure direction at the Tx, pointing from the Tx towards the first
    /// interaction point (or the Rx for line of sight).
    pub aod: UnitDir,
    /// Scattering point, `None` for the line-of-sight path.
    pub bounce_point: Option<Point3<f64>>,
}

impl Mpc {
    pub fn is_los(&self) -> bool {
        self.bounce_point.is_none()
    }
}

/// Receiver pose: position plus the rotation taking Rx-local directions to
/// world directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxPose {
    pub position: Point3<f64>,
    pub orientation: RotationQ,
}

impl RxPose {
    pub fn new(position: Point3<f64>, orientation: RotationQ) -> Self {
        RxPose {
            position,
            orientation,
        }
    }

    pub fn at(position: Point3<f64>) -> Self {
        RxPose {
            position,
            orientation: RotationQ::identity(),
        }
    }

    /// World direction of a pixel's bin center.
    pub fn pixel_dir_world(&self, grid: &SphericalGrid, row: usize, col: usize) -> UnitDir {
        self.orientation.rotate_dir(&grid.pixel_to_dir(row, col))
    }
}

/// Per-pixel channels. Gain 0 marks a miss; miss pixels carry zero ToF and
/// AoD sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectrumPixel {
    /// Linear power path gain.
    pub gain: f64,
    /// Time of flight, seconds.
    pub tof_s: f64,
    /// AoD azimuth, radians (world frame).
    pub aod_az: f64,
    /// AoD elevation, radians (world frame).
    pub aod_el: f64,
}

impl SpectrumPixel {
    pub const MISS: SpectrumPixel = SpectrumPixel {
        gain: 0.0,
        tof_s: 0.0,
        aod_az: 0.0,
        aod_el: 0.0,
    };

    pub fn is_hit(&self) -> bool {
        self.gain > 0.0
    }
}

/// An AoA-indexed grid of per-path channels at one receiver pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub grid: SphericalGrid,
    pub rx_pose: RxPose,
    pixels: Vec<SpectrumPixel>,
}

impl SpatialSpectrum {
    pub fn empty(grid: SphericalGrid, rx_pose: RxPose) -> Self {
        SpatialSpectrum {
            grid,
            rx_pose,
            pixels: vec![SpectrumPixel::MISS; grid.n_pixels()],
        }
    }

    pub fn from_pixels(grid: SphericalGrid, rx_pose: RxPose, pixels: Vec<SpectrumPixel>) -> Self {
        assert_eq!(pixels.len(), grid.n_pixels());
        SpatialSpectrum {
            grid,
            rx_pose,
            pixels,
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> &SpectrumPixel {
        &self.pixels[self.grid.pixel_index(row, col)]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut SpectrumPixel {
        &mut self.pixels[self.grid.pixel_index(row, col)]
    }

    pub fn pixels(&self) -> &[SpectrumPixel] {
        &self.pixels
    }

    pub fn hit_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_hit()).count()
    }

    /// Pixel with the largest gain; ties broken by (row, col) order.
    /// `None` when every pixel is a miss.
    pub fn argmax_gain(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.pixels.iter().enumerate() {
            if !p.is_hit() {
                continue;
            }
            match best {
                Some((_, g)) if p.gain <= g => {}
                _ => best = Some((i, p.gain)),
            }
        }
        best.map(|(i, _)| (i / self.grid.n_az, i % self.grid.n_az))
    }
}
