//! Unit directions and rotations.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};

/// A direction on the unit sphere. Always unit-norm (renormalized on
/// construction, |v| = 1 within 1e-9 thereafter).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDir(Vector3<f64>);

impl UnitDir {
    /// Normalizes `v`. Errors on zero/non-finite input.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid(format!(
                "cannot normalize direction ({}, {}, {})",
                v.x, v.y, v.z
            )));
        }
        Ok(UnitDir(v / n))
    }

    pub fn from_components(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Vector3::new(x, y, z))
    }

    /// Accepts components that are already unit-norm within 1e-9 and keeps
    /// them bit-exact (no renormalization); used by the binary readers.
    pub fn from_unit_components(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vector3::new(x, y, z);
        if (v.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "({x}, {y}, {z}) is not unit-norm within 1e-9"
            )));
        }
        Ok(UnitDir(v))
    }

    /// Direction from azimuth (about +z, 0 at +x) and elevation (0 at the
    /// equator, +pi/2 at +z).
    pub fn from_az_el(az: f64, el: f64) -> Self {
        let (sa, ca) = az.sin_cos();
        let (se, ce) = el.sin_cos();
        UnitDir(Vector3::new(ce * ca, ce * sa, se))
    }

    /// (azimuth in [-pi, pi], elevation in [-pi/2, pi/2]).
    pub fn to_az_el(&self) -> (f64, f64) {
        let az = self.0.y.atan2(self.0.x);
        let el = self.0.z.clamp(-1.0, 1.0).asin();
        (az, el)
    }

    /// Unit vector from `from` towards `to`.
    pub fn towards(from: &nalgebra::Point3<f64>, to: &nalgebra::Point3<f64>) -> Result<Self> {
        Self::new(to - from)
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn dot(&self, other: &UnitDir) -> f64 {
        self.0.dot(&other.0)
    }

    /// Angle to another direction, radians in [0, pi].
    pub fn angle_to(&self, other: &UnitDir) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos()
    }
}

impl From<UnitDir> for Vector3<f64> {
    fn from(d: UnitDir) -> Self {
        d.0
    }
}

/// A unit quaternion representing a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationQ(UnitQuaternion<f64>);

impl RotationQ {
    /// Builds from (w, x, y, z) components. Errors unless the norm is within
    /// 1e-9 of one; components are kept bit-exact (no renormalization), so
    /// encode/decode round trips are stable.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "quaternion norm {n} is not 1 within 1e-9"
            )));
        }
        Ok(RotationQ(UnitQuaternion::new_unchecked(q)))
    }

    pub fn identity() -> Self {
        RotationQ(UnitQuaternion::identity())
    }

    pub fn from_axis_angle(axis: UnitDir, angle: f64) -> Self {
        RotationQ(UnitQuaternion::from_axis_angle(
            &Unit::new_unchecked(*axis.as_vector()),
            angle,
        ))
    }

    /// Rotation whose columns are the given orthonormal frame (right-handed:
    /// x_axis x y_axis = z_axis).
    pub fn from_frame(x_axis: &Vector3<f64>, y_axis: &Vector3<f64>, z_axis: &Vector3<f64>) -> Self {
        let m = Matrix3::from_columns(&[*x_axis, *y_axis, *z_axis]);
        RotationQ(UnitQuaternion::from_matrix(&m))
    }

    /// Components as (w, x, y, z).
    pub fn wxyz(&self) -> (f64, f64, f64, f64) {
        let q = self.0.quaternion();
        (q.w, q.i, q.j, q.k)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn rotate_dir(&self, d: &UnitDir) -> UnitDir {
        // Rotation preserves the norm; skip renormalization checks.
        UnitDir(self.0 * d.as_vector())
    }

    pub fn inverse(&self) -> Self {
        RotationQ(self.0.inverse())
    }

    /// Composition: `self` applied after `other` (self ∘ other).
    pub fn compose(&self, other: &RotationQ) -> Self {
        RotationQ(self.0 * other.0)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }
}

impl Default for RotationQ {
    fn default() -> Self {
        Self::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> RotationQ {
        let axis = UnitDir::from_components(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0f64) + 1.5,
        )
        .unwrap();
        RotationQ::from_axis_angle(axis, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
    }

    #[test]
    fn identity_rotation_fixes_vectors() {
        let q = RotationQ::identity();
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(q.rotate(&v), v);
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = RotationQ::from_axis_angle(
            UnitDir::from_components(0.0, 0.0, 1.0).unwrap(),
            std::f64::consts::FRAC_PI_2,
        );
        let r = q.rotate(&Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(r.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q = random_rotation(&mut rng);
            let v = Vector3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            assert!((q.rotate(&v).norm() - v.norm()).abs() <= 1e-12 * v.norm().max(1.0));
        }
    }

    #[test]
    fn rotation_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let q1 = random_rotation(&mut rng);
            let q2 = random_rotation(&mut rng);
            let v = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let a = q1.rotate(&q2.rotate(&v));
            let b = q1.compose(&q2).rotate(&v);
            assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn rotation_matrix_is_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let det = q.to_matrix().determinant();
            assert!((det - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(RotationQ::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(RotationQ::new(1.0, 0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn az_el_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..500 {
            let d = UnitDir::from_components(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let Ok(d) = d else { continue };
            let (az, el) = d.to_az_el();
            let back = UnitDir::from_az_el(az, el);
            assert!((d.as_vector() - back.as_vector()).norm() <= 1e-9);
        }
    }

    #[test]
    fn zero_direction_rejected() {
        assert!(UnitDir::from_components(0.0, 0.0, 0.0).is_err());
    }
}
