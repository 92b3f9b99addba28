//! LoS + single-bounce scattering ray tracer.
//!
//! Ground truth for training and evaluation: every receiver position gets a
//! list of multipath components (one line-of-sight path when unoccluded, one
//! scattered path per mutually visible facet sample point) plus the spatial
//! spectrum binned from them.

use crate::error::{Error, Result};
use crate::geom::UnitDir;
use crate::grid::SphericalGrid;
use crate::scene::{Facet, Material, Scene};
use crate::spectrum::{Mpc, RxPose, SpatialSpectrum, SpectrumPixel};
use crate::SPEED_OF_LIGHT;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Free-space power gain (lambda / 4 pi d)^2.
pub fn free_space_gain(wavelength_m: f64, path_len_m: f64) -> f64 {
    let a = wavelength_m / (4.0 * std::f64::consts::PI * path_len_m);
    a * a
}

/// Directive-lobe scattering gain.
///
/// `incident` points into the surface (incident . normal < 0), `outgoing`
/// away from it. Returns
/// `reduction * S^2 * ((1 + cos psi) / 2)^alpha_R * cos theta_i`
/// with psi the angle between `outgoing` and the specular direction and
/// theta_i the incidence angle. Directions outside the valid hemispheres get
/// zero gain rather than an error.
pub fn scattering_gain(
    material: &Material,
    incident: &UnitDir,
    outgoing: &UnitDir,
    normal: &UnitDir,
) -> f64 {
    let cos_in = -incident.dot(normal);
    let cos_out = outgoing.dot(normal);
    if cos_in <= 0.0 || cos_out <= 0.0 {
        return 0.0;
    }
    // Specular direction of the incident ray.
    let spec = incident.as_vector() + 2.0 * cos_in * normal.as_vector();
    let cos_psi = outgoing.as_vector().dot(&spec).clamp(-1.0, 1.0);
    let lobe = ((1.0 + cos_psi) / 2.0).powi(material.lobe_exponent as i32);
    let s = material.scattering_coefficient;
    material.reflection_reduction * s * s * lobe * cos_in
}

/// Möller–Trumbore segment/triangle intersection, used for occlusion tests.
/// Returns the parametric position t in (t_min, t_max) when the segment
/// `origin + t * dir` crosses the facet.
fn segment_hits_facet(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    facet: &Facet,
    t_min: f64,
    t_max: f64,
) -> Option<f64> {
    let e1 = facet.vertices[1] - facet.vertices[0];
    let e2 = facet.vertices[2] - facet.vertices[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - facet.vertices[0];
    let u = tvec.dot(&pvec) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    (t > t_min && t < t_max).then_some(t)
}

/// True when the open segment from `a` to `b` crosses any facet other than
/// `skip` (by index).
pub fn segment_occluded(scene: &Scene, a: &Point3<f64>, b: &Point3<f64>, skip: Option<usize>) -> bool {
    let dir = b - a;
    // Relative clearance keeps endpoint facets from shadowing themselves.
    let eps = 1e-9;
    scene.facets.iter().enumerate().any(|(i, f)| {
        Some(i) != skip && segment_hits_facet(a, &dir, f, eps, 1.0 - eps).is_some()
    })
}

fn phase_for_delay(carrier_hz: f64, delay_s: f64) -> f64 {
    (-TAU * carrier_hz * delay_s).rem_euclid(TAU)
}

/// Traces all paths from the scene Tx to `rx`: the LoS component when the
/// segment is clear, plus one scattered component per facet sample point
/// visible from both ends. Components with zero gain are dropped.
pub fn trace(scene: &Scene, rx: &Point3<f64>) -> Vec<Mpc> {
    let lambda = scene.wavelength_m();
    let tx = scene.tx_position;
    let mut mpcs = Vec::new();

    if let Ok(aoa) = UnitDir::towards(rx, &tx) {
        if !segment_occluded(scene, &tx, rx, None) {
            let d = (rx - tx).norm();
            let delay = d / SPEED_OF_LIGHT;
            mpcs.push(Mpc {
                gain: free_space_gain(lambda, d),
                phase_rad: phase_for_delay(scene.carrier_frequency_hz, delay),
                delay_s: delay,
                aoa,
                aod: UnitDir::towards(&tx, rx).expect("tx != rx"),
                bounce_point: None,
            });
        }
    }

    for (fi, facet) in scene.facets.iter().enumerate() {
        if facet.area() < 1e-12 {
            log::warn!("skipping near-degenerate facet {fi}");
            continue;
        }
        let material = scene.material_of(facet);
        for p in facet.grid_points(scene.trace_spacing_m) {
            let Ok(incident) = UnitDir::towards(&tx, &p) else {
                continue;
            };
            let Ok(outgoing) = UnitDir::towards(&p, rx) else {
                continue;
            };
            let gain_scatter = scattering_gain(material, &incident, &outgoing, &facet.normal);
            if gain_scatter <= 0.0 {
                continue;
            }
            if segment_occluded(scene, &tx, &p, Some(fi))
                || segment_occluded(scene, &p, rx, Some(fi))
            {
                continue;
            }
            let d_total = (p - tx).norm() + (rx - p).norm();
            let delay = d_total / SPEED_OF_LIGHT;
            mpcs.push(Mpc {
                gain: gain_scatter * free_space_gain(lambda, d_total),
                phase_rad: phase_for_delay(scene.carrier_frequency_hz, delay),
                delay_s: delay,
                aoa: UnitDir::towards(rx, &p).expect("rx != p"),
                aod: incident,
                bounce_point: Some(p),
            });
        }
    }

    mpcs
}

/// Bins MPCs into a spatial spectrum by AoA in the receiver frame. When
/// several components share a pixel the strongest wins and the rest are
/// dropped; the winner populates every channel.
pub fn spectrum_from_mpcs(
    mpcs: &[Mpc],
    grid: SphericalGrid,
    rx_pose: RxPose,
) -> SpatialSpectrum {
    let mut spectrum = SpatialSpectrum::empty(grid, rx_pose);
    let world_to_rx = rx_pose.orientation.inverse();
    for mpc in mpcs {
        if mpc.gain <= 0.0 {
            continue;
        }
        let local = world_to_rx.rotate_dir(&mpc.aoa);
        let (row, col) = grid.dir_to_pixel(&local);
        let px = spectrum.pixel_mut(row, col);
        if mpc.gain > px.gain {
            let (aod_az, aod_el) = mpc.aod.to_az_el();
            *px = SpectrumPixel {
                gain: mpc.gain,
                tof_s: mpc.delay_s,
                aod_az,
                aod_el,
            };
        }
    }
    spectrum
}

/// One dataset sample: receiver pose, traced components, binned spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct RxSample {
    pub rx_pose: RxPose,
    pub mpcs: Vec<Mpc>,
    pub spectrum: SpatialSpectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: SphericalGrid,
    pub carrier_frequency_hz: f64,
    pub samples: Vec<RxSample>,
}

/// Draws `n_rx` receiver positions uniformly from the scene sampling volume
/// (identity orientation) and traces each one. Deterministic for a fixed
/// seed; samples are stored in draw order.
pub fn generate_dataset(
    scene: &Scene,
    n_rx: usize,
    grid: SphericalGrid,
    rng_seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let vol = &scene.sampling_volume;
    let positions: Vec<Point3<f64>> = (0..n_rx)
        .map(|_| {
            Point3::new(
                sample_coord(&mut rng, vol.min.x, vol.max.x),
                sample_coord(&mut rng, vol.min.y, vol.max.y),
                sample_coord(&mut rng, vol.min.z, vol.max.z),
            )
        })
        .collect();

    let samples: Vec<RxSample> = positions
        .into_par_iter()
        .map(|pos| {
            let pose = RxPose::at(pos);
            let mpcs = trace(scene, &pos);
            let spectrum = spectrum_from_mpcs(&mpcs, grid, pose);
            RxSample {
                rx_pose: pose,
                mpcs,
                spectrum,
            }
        })
        .collect();

    Dataset {
        grid,
        carrier_frequency_hz: scene.carrier_frequency_hz,
        samples,
    }
}

fn sample_coord(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Splits a dataset into (test, training pool): the first `test_size` samples
/// are held out, the rest form the pool that training subsets draw from.
pub fn split_test_train(dataset: &Dataset, test_size: usize) -> Result<(Vec<&RxSample>, Vec<&RxSample>)> {
    if test_size > dataset.samples.len() {
        return Err(Error::invalid(format!(
            "test size {} exceeds dataset size {}",
            test_size,
            dataset.samples.len()
        )));
    }
    let (test, pool) = dataset.samples.split_at(test_size);
    Ok((test.iter().collect(), pool.iter().collect()))
}
