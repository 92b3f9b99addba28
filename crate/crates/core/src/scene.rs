//! Scene description: triangular facets with THz material parameters, the
//! transmitter configuration, and the receiver sampling volume.
//!
//! Scenes load from a TOML file with sections `materials`, `facets`, `tx`,
//! `sampling_volume` and an optional `tracing` section; unknown keys are
//! rejected. Facet normals follow the right-hand rule over the vertex winding,
//! so the vertex order decides which side scatters.

use crate::error::{Error, Result};
use crate::geom::UnitDir;
use crate::SPEED_OF_LIGHT;
use nalgebra::Point3;
use serde::Deserialize;
use std::path::Path;

/// Surface material under the directive scattering model.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    /// Scattering coefficient S in [0, 1]: fraction of the field amplitude
    /// that is diffusely scattered.
    pub scattering_coefficient: f64,
    /// Directive lobe exponent alpha_R >= 1; larger values narrow the lobe
    /// around the specular direction.
    pub lobe_exponent: u32,
    /// Fraction of incident power retained after roughness loss, in [0, 1].
    pub reflection_reduction: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.scattering_coefficient) {
            return Err(Error::Scene(format!(
                "material '{}': scattering_coefficient {} outside [0, 1]",
                self.name, self.scattering_coefficient
            )));
        }
        if self.lobe_exponent < 1 {
            return Err(Error::Scene(format!(
                "material '{}': lobe_exponent must be >= 1",
                self.name
            )));
        }
        if !(0.0..=1.0).contains(&self.reflection_reduction) {
            return Err(Error::Scene(format!(
                "material '{}': reflection_reduction {} outside [0, 1]",
                self.name, self.reflection_reduction
            )));
        }
        Ok(())
    }
}

/// A triangular facet with an outward unit normal (right-hand rule over the
/// vertex winding) and a material reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub vertices: [Point3<f64>; 3],
    pub normal: UnitDir,
    pub material: usize,
}

impl Facet {
    /// Builds a facet; errors when the vertices are (near-)collinear.
    pub fn new(vertices: [Point3<f64>; 3], material: usize) -> Result<Self> {
        let e1 = vertices[1] - vertices[0];
        let e2 = vertices[2] - vertices[0];
        let cross = e1.cross(&e2);
        let area2 = cross.norm();
        if area2 < 1e-12 {
            return Err(Error::Scene(format!(
                "degenerate facet: vertices {:?} are collinear",
                vertices
            )));
        }
        let normal = UnitDir::new(cross)?;
        Ok(Facet {
            vertices,
            normal,
            material,
        })
    }

    pub fn area(&self) -> f64 {
        let e1 = self.vertices[1] - self.vertices[0];
        let e2 = self.vertices[2] - self.vertices[0];
        0.5 * e1.cross(&e2).norm()
    }

    pub fn centroid(&self) -> Point3<f64> {
        Point3::from(
            (self.vertices[0].coords + self.vertices[1].coords + self.vertices[2].coords) / 3.0,
        )
    }

    pub fn longest_edge(&self) -> f64 {
        let a = (self.vertices[1] - self.vertices[0]).norm();
        let b = (self.vertices[2] - self.vertices[1]).norm();
        let c = (self.vertices[0] - self.vertices[2]).norm();
        a.max(b).max(c)
    }

    /// Deterministic surface grid: centroids of the k^2 sub-triangles of the
    /// barycentric subdivision, with k chosen so sub-triangle edges are at
    /// most `spacing`. Always yields at least the facet centroid.
    pub fn grid_points(&self, spacing: f64) -> Vec<Point3<f64>> {
        let k = if spacing <= 0.0 {
            1
        } else {
            ((self.longest_edge() / spacing).ceil() as usize).max(1)
        };
        let a = self.vertices[0].coords;
        let u = self.vertices[1] - self.vertices[0];
        let v = self.vertices[2] - self.vertices[0];
        let kf = k as f64;
        let mut pts = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..(k - i) {
                // Upward sub-triangle centroid.
                let su = (3 * i + 1) as f64 / (3.0 * kf);
                let sv = (3 * j + 1) as f64 / (3.0 * kf);
                pts.push(Point3::from(a + u * su + v * sv));
                // Downward sub-triangle centroid.
                if i + j < k - 1 {
                    let su = (3 * i + 2) as f64 / (3.0 * kf);
                    let sv = (3 * j + 2) as f64 / (3.0 * kf);
                    pts.push(Point3::from(a + u * su + v * sv));
                }
            }
        }
        pts
    }
}

/// Axis-aligned receiver sampling volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingVolume {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl SamplingVolume {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i] <= self.max[i]) {
                return Err(Error::Scene(format!(
                    "sampling volume min {:?} exceeds max {:?}",
                    self.min, self.max
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub materials: Vec<Material>,
    pub facets: Vec<Facet>,
    pub tx_position: Point3<f64>,
    pub carrier_frequency_hz: f64,
    pub sampling_volume: SamplingVolume,
    /// Facet sample-point spacing used by the tracer, meters.
    pub trace_spacing_m: f64,
}

impl Scene {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn material_of(&self, facet: &Facet) -> &Material {
        &self.materials[facet.material]
    }

    /// Axis-aligned bounding box over facet vertices and the Tx position.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.tx_position;
        let mut hi = self.tx_position;
        for f in &self.facets {
            for v in &f.vertices {
                for i in 0..3 {
                    lo[i] = lo[i].min(v[i]);
                    hi[i] = hi[i].max(v[i]);
                }
            }
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.materials {
            m.validate()?;
        }
        for f in &self.facets {
            if f.material >= self.materials.len() {
                return Err(Error::Scene(format!(
                    "facet references material index {} out of range",
                    f.material
                )));
            }
        }
        if !(self.carrier_frequency_hz > 0.0) {
            return Err(Error::Scene("carrier frequency must be positive".into()));
        }
        if !(self.trace_spacing_m > 0.0) {
            return Err(Error::Scene("trace spacing must be positive".into()));
        }
        self.sampling_volume.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text)?;
        file.into_scene()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Default facet sample spacing for the tracer, meters.
pub const DEFAULT_TRACE_SPACING_M: f64 = 0.25;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    materials: Vec<MaterialEntry>,
    facets: Vec<FacetEntry>,
    tx: TxEntry,
    sampling_volume: VolumeEntry,
    #[serde(default)]
    tracing: TracingEntry,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialEntry {
    name: String,
    scattering_coefficient: f64,
    lobe_exponent: u32,
    reflection_reduction: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FacetEntry {
    vertices: [[f64; 3]; 3],
    material: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TxEntry {
    position: [f64; 3],
    carrier_frequency_hz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeEntry {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TracingEntry {
    sample_spacing_m: Option<f64>,
}

impl SceneFile {
    fn into_scene(self) -> Result<Scene> {
        let materials: Vec<Material> = self
            .materials
            .iter()
            .map(|m| Material {
                name: m.name.clone(),
                scattering_coefficient: m.scattering_coefficient,
                lobe_exponent: m.lobe_exponent,
                reflection_reduction: m.reflection_reduction,
            })
            .collect();
        let mut facets = Vec::with_capacity(self.facets.len());
        for entry in &self.facets {
            let mat = materials
                .iter()
                .position(|m| m.name == entry.material)
                .ok_or_else(|| {
                    Error::Scene(format!("facet references unknown material '{}'", entry.material))
                })?;
            let verts = [
                Point3::new(entry.vertices[0][0], entry.vertices[0][1], entry.vertices[0][2]),
                Point3::new(entry.vertices[1][0], entry.vertices[1][1], entry.vertices[1][2]),
                Point3::new(entry.vertices[2][0], entry.vertices[2][1], entry.vertices[2][2]),
            ];
            facets.push(Facet::new(verts, mat)?);
        }
        let scene = Scene {
            materials,
            facets,
            tx_position: Point3::new(self.tx.position[0], self.tx.position[1], self.tx.position[2]),
            carrier_frequency_hz: self.tx.carrier_frequency_hz,
            sampling_volume: SamplingVolume {
                min: Point3::new(
                    self.sampling_volume.min[0],
                    self.sampling_volume.min[1],
                    self.sampling_volume.min[2],
                ),
                max: Point3::new(
                    self.sampling_volume.max[0],
                    self.sampling_volume.max[1],
                    self.sampling_volume.max[2],
                ),
            },
            trace_spacing_m: self
                .tracing
                .sample_spacing_m
                .unwrap_or(DEFAULT_TRACE_SPACING_M),
        };
        scene.validate()?;
        Ok(scene)
    }
}
