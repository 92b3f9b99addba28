//! Equirectangular angle-of-arrival grid.
//!
//! Rows index elevation from +pi/2 (row 0, towards +z) down to -pi/2; columns
//! index azimuth from -pi (col 0) up to +pi. Pixel directions are bin centers.

use crate::error::{Error, Result};
use crate::geom::UnitDir;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphericalGrid {
    /// Elevation bin count (rows).
    pub n_el: usize,
    /// Azimuth bin count (columns).
    pub n_az: usize,
}

impl SphericalGrid {
    pub fn new(n_el: usize, n_az: usize) -> Result<Self> {
        if n_el == 0 || n_az == 0 {
            return Err(Error::invalid("grid dimensions must be at least 1x1"));
        }
        Ok(SphericalGrid { n_el, n_az })
    }

    pub fn n_pixels(&self) -> usize {
        self.n_el * self.n_az
    }

    /// Elevation bin height, radians.
    pub fn el_step(&self) -> f64 {
        PI / self.n_el as f64
    }

    /// Azimuth bin width, radians.
    pub fn az_step(&self) -> f64 {
        2.0 * PI / self.n_az as f64
    }

    /// Nearest-bin mapping; total and deterministic for any unit direction.
    pub fn dir_to_pixel(&self, d: &UnitDir) -> (usize, usize) {
        let (az, el) = d.to_az_el();
        let row = ((PI / 2.0 - el) / self.el_step()) as isize;
        let row = row.clamp(0, self.n_el as isize - 1) as usize;
        let col = ((az + PI) / self.az_step()) as isize;
        // az = +pi wraps onto column 0.
        let col = col.rem_euclid(self.n_az as isize) as usize;
        (row, col)
    }

    /// Bin-center direction of pixel (row, col).
    pub fn pixel_to_dir(&self, row: usize, col: usize) -> UnitDir {
        debug_assert!(row < self.n_el && col < self.n_az);
        let el = PI / 2.0 - (row as f64 + 0.5) * self.el_step();
        let az = -PI + (col as f64 + 0.5) * self.az_step();
        UnitDir::from_az_el(az, el)
    }

    /// Bin-center elevation of a row.
    pub fn row_center_el(&self, row: usize) -> f64 {
        PI / 2.0 - (row as f64 + 0.5) * self.el_step()
    }

    pub fn pixel_index(&self, row: usize, col: usize) -> usize {
        row * self.n_az + col
    }
}

impl std::fmt::Display for SphericalGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n_el, self.n_az)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pole_maps_to_top_row() {
        let g = SphericalGrid::new(4, 8).unwrap();
        let (row, _) = g.dir_to_pixel(&UnitDir::from_components(0.0, 0.0, 1.0).unwrap());
        assert_eq!(row, 0);
        let (row, _) = g.dir_to_pixel(&UnitDir::from_components(0.0, 0.0, -1.0).unwrap());
        assert_eq!(row, 3);
    }

    #[test]
    fn plus_x_maps_to_equator_center() {
        // el 0 on a 4-row grid falls in row 2; az 0 on 8 columns falls in col 4.
        let g = SphericalGrid::new(4, 8).unwrap();
        let d = UnitDir::from_components(1.0, 0.0, 0.0).unwrap();
        assert_eq!(g.dir_to_pixel(&d), (2, 4));
    }

    #[test]
    fn bin_centers_round_trip_exactly() {
        let g = SphericalGrid::new(8, 16).unwrap();
        for row in 0..g.n_el {
            for col in 0..g.n_az {
                let d = g.pixel_to_dir(row, col);
                assert_eq!(g.dir_to_pixel(&d), (row, col), "bin ({row},{col})");
            }
        }
    }

    #[test]
    fn azimuth_wraps_at_pi() {
        let g = SphericalGrid::new(4, 8).unwrap();
        // atan2(0, -1) = +pi, which belongs to column 0 of the [-pi, pi) span.
        let d = UnitDir::from_components(-1.0, 0.0, 0.0).unwrap();
        let (_, col) = g.dir_to_pixel(&d);
        assert_eq!(col, 0);
    }

    #[test]
    fn zero_size_rejected() {
        assert!(SphericalGrid::new(0, 8).is_err());
        assert!(SphericalGrid::new(4, 0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_within_one_bin_width(
            x in -1.0f64..1.0,
            y in -1.0f64..1.0,
            z in -1.0f64..1.0,
            n_el in 1usize..24,
            n_az in 1usize..48,
        ) {
            prop_assume!(x * x + y * y + z * z > 1e-6);
            let d = UnitDir::from_components(x, y, z).unwrap();
            let g = SphericalGrid::new(n_el, n_az).unwrap();
            let (row, col) = g.dir_to_pixel(&d);
            let back = g.pixel_to_dir(row, col);
            let bin_width = g.el_step().max(g.az_step());
            prop_assert!(d.angle_to(&back) < bin_width);
        }
    }
}
