//! Reconstruction of terahertz spatial wireless channels as a radio radiance
//! field of 3D Gaussian primitives.
//!
//! The crate covers the full pipeline:
//!
//! 1. [`scene`] / [`trace`] — scene description with THz material parameters
//!    and a LoS + single-bounce scattering ray tracer that produces ground-truth
//!    multipath components and receiver-side spatial spectra.
//! 2. [`field`] — the learnable representation: anisotropic 3D Gaussians seeded
//!    on the scene mesh, each carrying a spherical-harmonic directional gain.
//! 3. [`render`] — depth-sorted alpha-blended spectrum rendering with full-path
//!    (prior length + view depth) path loss and ToF, plus a per-ray oracle and
//!    a legacy frozen-depth mode for baseline comparison.
//! 4. [`train`] — analytic-gradient fitting of the SH gain coefficients against
//!    ground-truth spectra.
//! 5. [`channel`] / [`metrics`] / [`sweep`] — baseband CIR synthesis under
//!    2.16 GHz channelization, PSNR/SSIM spectrum metrics, and the
//!    training-size sweep harness.
//! 6. [`io`] — binary dataset / checkpoint persistence and the dataset manifest.

pub mod channel;
pub mod error;
pub mod field;
pub mod geom;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod render;
pub mod scene;
pub mod sh;
pub mod spectrum;
pub mod sweep;
pub mod trace;
pub mod train;

pub use error::{Error, Result};
pub use field::{GaussianField, GaussianPrimitive, SeedParams};
pub use geom::{RotationQ, UnitDir};
pub use grid::SphericalGrid;
pub use scene::{Facet, Material, Scene};
pub use sh::ShCoeffs;
pub use spectrum::{Mpc, RxPose, SpatialSpectrum, SpectrumPixel};
pub use trace::{generate_dataset, trace, Dataset, RxSample};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
