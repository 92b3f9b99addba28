//! Real spherical-harmonic basis, degrees 0 through 4.
//!
//! Basis values are returned in (l, m) lexicographic order, index l*(l+1)+m,
//! and are orthonormal under integration over the unit sphere.

use crate::error::{Error, Result};
use crate::geom::UnitDir;
use serde::{Deserialize, Serialize};

pub const MAX_DEGREE: usize = 4;

/// Number of basis functions for a given degree: (L+1)^2.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Evaluates the real SH basis Y_l^m(d) for all l <= degree.
pub fn sh_basis(degree: usize, d: &UnitDir) -> Result<Vec<f64>> {
    if degree > MAX_DEGREE {
        return Err(Error::invalid(format!(
            "SH degree {degree} out of range 0..={MAX_DEGREE}"
        )));
    }
    let mut out = vec![0.0; coeff_count(degree)];
    sh_basis_into(degree, d, &mut out);
    Ok(out)
}

/// As [`sh_basis`], writing into a caller-provided slice of length
/// `coeff_count(degree)`. The degree must already be validated.
pub fn sh_basis_into(degree: usize, d: &UnitDir, out: &mut [f64]) {
    debug_assert!(degree <= MAX_DEGREE);
    debug_assert_eq!(out.len(), coeff_count(degree));
    let (x, y, z) = (d.x(), d.y(), d.z());

    out[0] = 0.28209479177387814; // 1/(2 sqrt(pi))
    if degree == 0 {
        return;
    }

    const C1: f64 = 0.4886025119029199; // sqrt(3/(4 pi))
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if degree == 1 {
        return;
    }

    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = 1.0925484305920792 * xy;
    out[5] = -1.0925484305920792 * yz;
    out[6] = 0.31539156525252005 * (3.0 * zz - 1.0);
    out[7] = -1.0925484305920792 * xz;
    out[8] = 0.5462742152960396 * (xx - yy);
    if degree == 2 {
        return;
    }

    out[9] = -0.5900435899266435 * y * (3.0 * xx - yy);
    out[10] = 2.890611442640554 * xy * z;
    out[11] = -0.4570457994644658 * y * (5.0 * zz - 1.0);
    out[12] = 0.3731763325901154 * z * (5.0 * zz - 3.0);
    out[13] = -0.4570457994644658 * x * (5.0 * zz - 1.0);
    out[14] = 1.445305721320277 * z * (xx - yy);
    out[15] = -0.5900435899266435 * x * (xx - 3.0 * yy);
    if degree == 3 {
        return;
    }

    out[16] = 2.5033429417967046 * xy * (xx - yy);
    out[17] = -1.7701307697799304 * yz * (3.0 * xx - yy);
    out[18] = 0.9461746957575601 * xy * (7.0 * zz - 1.0);
    out[19] = -0.6690465435572892 * yz * (7.0 * zz - 3.0);
    out[20] = 0.10578554691520431 * (35.0 * zz * zz - 30.0 * zz + 3.0);
    out[21] = -0.6690465435572892 * xz * (7.0 * zz - 3.0);
    out[22] = 0.47308734787878004 * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = -1.7701307697799304 * xz * (xx - 3.0 * yy);
    out[24] = 0.6258357354491761 * (xx * xx - 6.0 * xx * yy + yy * yy);
}

/// One channel of SH coefficients up to a fixed degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShCoeffs {
    degree: usize,
    coeffs: Vec<f64>,
}

impl ShCoeffs {
    /// All-zero coefficients of the given degree.
    pub fn zeros(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "SH degree {degree} out of range 0..={MAX_DEGREE}"
            )));
        }
        Ok(ShCoeffs {
            degree,
            coeffs: vec![0.0; coeff_count(degree)],
        })
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "SH degree {degree} out of range 0..={MAX_DEGREE}"
            )));
        }
        if coeffs.len() != coeff_count(degree) {
            return Err(Error::invalid(format!(
                "degree {degree} needs {} coefficients, got {}",
                coeff_count(degree),
                coeffs.len()
            )));
        }
        Ok(ShCoeffs { degree, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Dot product with a precomputed basis vector of matching length.
    pub fn dot_basis(&self, basis: &[f64]) -> f64 {
        debug_assert_eq!(basis.len(), self.coeffs.len());
        self.coeffs.iter().zip(basis).map(|(c, b)| c * b).sum()
    }

    /// Evaluates the expansion at a direction.
    pub fn eval(&self, d: &UnitDir) -> f64 {
        let mut basis = vec![0.0; self.coeffs.len()];
        sh_basis_into(self.degree, d, &mut basis);
        self.dot_basis(&basis)
    }
}
