//! The learnable radiance representation: anisotropic 3D Gaussians seeded on
//! the scene mesh. Geometry (centers, scales, rotations, densities) is frozen
//! after seeding; only the SH directional-gain coefficients train.
//!
//! Directional gain is stored in the log domain and decoded through an exp
//! link, keeping it positive across the ~100 dB dynamic range of THz path
//! loss.

use crate::error::{Error, Result};
use crate::geom::{RotationQ, UnitDir};
use crate::scene::Scene;
use crate::sh::ShCoeffs;
use nalgebra::{Point3, Vector3};

/// Effective densities below this are treated as zero by the renderer.
pub const DENSITY_CUTOFF: f64 = 1e-8;

/// Upper bound on the decoded directional gain (+10 dB). A single-bounce
/// interaction cannot amplify; the headroom over 1 absorbs blend-weight
/// normalization. The log-domain cap also stops SH extrapolation from
/// exploding in directions no training ray constrains.
pub const MAX_GAIN: f64 = 10.0;

/// A ray as origin + t * dir, t >= 0.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: UnitDir,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: UnitDir) -> Self {
        Ray { origin, dir }
    }

    pub fn point_at(&self, t: f64) -> Point3<f64> {
        self.origin + t * self.dir.as_vector()
    }
}

/// One anisotropic 3D Gaussian primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub center: Point3<f64>,
    /// Per-axis standard deviations in the local frame, meters.
    pub scale: Vector3<f64>,
    /// Local-to-world rotation.
    pub rotation: RotationQ,
    /// Base density alpha_g >= 0.
    pub base_density: f64,
    /// Log-domain directional gain coefficients (single channel).
    pub gain_sh: ShCoeffs,
}

impl GaussianPrimitive {
    /// Closest-approach parameter of `ray` to the center, clamped to the
    /// forward half-line.
    pub fn view_depth(&self, ray: &Ray) -> f64 {
        (self.center - ray.origin).dot(ray.dir.as_vector()).max(0.0)
    }

    /// Squared Mahalanobis distance from a world point to the center under
    /// the covariance R diag(scale^2) R^T.
    pub fn mahalanobis_sq(&self, p: &Point3<f64>) -> f64 {
        let local = self
            .rotation
            .inverse()
            .rotate(&(p - self.center));
        let sx = local.x / self.scale.x;
        let sy = local.y / self.scale.y;
        let sz = local.z / self.scale.z;
        sx * sx + sy * sy + sz * sz
    }

    /// Effective density along a ray: base density times the Gaussian
    /// evaluated at the ray's closest-approach point.
    pub fn effective_density(&self, ray: &Ray) -> f64 {
        let t = self.view_depth(ray);
        let m2 = self.mahalanobis_sq(&ray.point_at(t));
        self.base_density * (-0.5 * m2).exp()
    }

    /// Decoded directional interaction gain, exp(sh . basis) clamped to
    /// [`MAX_GAIN`]. Strictly positive.
    pub fn decoded_gain(&self, d: &UnitDir) -> f64 {
        self.gain_sh.eval(d).min(MAX_GAIN.ln()).exp()
    }

    /// As [`decoded_gain`](Self::decoded_gain) with a precomputed basis.
    pub fn decoded_gain_basis(&self, basis: &[f64]) -> f64 {
        self.log_gain_basis(basis).min(MAX_GAIN.ln()).exp()
    }

    /// Raw log-domain gain before the cap.
    pub fn log_gain_basis(&self, basis: &[f64]) -> f64 {
        self.gain_sh.dot_basis(basis)
    }

    /// Radius beyond which the effective density falls below the cutoff,
    /// conservatively measured along the widest axis.
    pub fn cutoff_radius(&self) -> f64 {
        if self.base_density <= DENSITY_CUTOFF {
            return 0.0;
        }
        let m2 = 2.0 * (self.base_density / DENSITY_CUTOFF).ln();
        let s_max = self.scale.x.max(self.scale.y).max(self.scale.z);
        m2.sqrt() * s_max
    }
}

/// Seeding parameters for [`GaussianField::seed_from_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedParams {
    /// Surface grid spacing, meters.
    pub spacing_m: f64,
    /// Base density alpha_g for every seeded Gaussian.
    pub init_density: f64,
    /// Tangential standard deviation, meters.
    pub init_scale_m: f64,
    /// Normal-axis scale as a fraction of the tangential scale (< 1 keeps
    /// the Gaussians flattened onto the surface).
    pub normal_scale_ratio: f64,
    /// Initial decoded gain in every direction.
    pub init_gain: f64,
    /// SH degree of the gain channel.
    pub sh_degree: usize,
}

impl Default for SeedParams {
    fn default() -> Self {
        SeedParams {
            spacing_m: 0.18,
            init_density: 0.8,
            init_scale_m: 0.1,
            normal_scale_ratio: 0.25,
            init_gain: 1.0,
            sh_degree: 3,
        }
    }
}

/// The radiance field: Gaussian primitives plus the transmitter context they
/// were trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    pub primitives: Vec<GaussianPrimitive>,
    pub tx_position: Point3<f64>,
    pub carrier_frequency_hz: f64,
    pub sh_degree: usize,
}

impl GaussianField {
    pub fn wavelength_m(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Seeds one flattened Gaussian per facet surface grid point, smallest
    /// scale axis along the facet normal. Deterministic.
    pub fn seed_from_scene(scene: &Scene, params: &SeedParams) -> Result<Self> {
        if scene.facets.is_empty() {
            return Err(Error::Scene("no facets to seed from".into()));
        }
        if !(params.spacing_m > 0.0) {
            return Err(Error::invalid("seed spacing must be positive"));
        }
        if !(params.init_scale_m > 0.0) || !(params.normal_scale_ratio > 0.0) {
            return Err(Error::invalid("seed scales must be positive"));
        }
        if params.init_density < 0.0 {
            return Err(Error::invalid("seed density must be nonnegative"));
        }
        if !(params.init_gain > 0.0) {
            return Err(Error::invalid("seed gain must be positive"));
        }

        // Constant decoded gain g0: only the band-0 coefficient is set,
        // c0 = ln(g0) / Y00.
        let mut init_sh = ShCoeffs::zeros(params.sh_degree)?;
        init_sh.coeffs_mut()[0] = params.init_gain.ln() / 0.28209479177387814;

        let mut primitives = Vec::new();
        for facet in &scene.facets {
            let normal = *facet.normal.as_vector();
            // Local frame: two tangents plus the normal as local z.
            let t1 = (facet.vertices[1] - facet.vertices[0]).normalize();
            let t2 = normal.cross(&t1);
            let rotation = RotationQ::from_frame(&t1, &t2, &normal);
            let scale = Vector3::new(
                params.init_scale_m,
                params.init_scale_m,
                params.init_scale_m * params.normal_scale_ratio,
            );
            for p in facet.grid_points(params.spacing_m) {
                primitives.push(GaussianPrimitive {
                    center: p,
                    scale,
                    rotation,
                    base_density: params.init_density,
                    gain_sh: init_sh.clone(),
                });
            }
        }

        Ok(GaussianField {
            primitives,
            tx_position: scene.tx_position,
            carrier_frequency_hz: scene.carrier_frequency_hz,
            sh_degree: params.sh_degree,
        })
    }
}
