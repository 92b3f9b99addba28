//! Spectrum rendering from a Gaussian field.
//!
//! Per rendering ray the visible Gaussians are depth-sorted and alpha-blended:
//! the k-th Gaussian contributes its effective density alpha_k, weighted by
//! the transmittance T_k = exp(-sum_{j<k} alpha_j) of everything in front of
//! it. Full-path mode evaluates each term's free-space factor at
//! l_prev + l_vd,k (prior Tx path length plus that Gaussian's view depth), so
//! path loss and ToF track the receiver; legacy mode freezes the view depth
//! at a per-Gaussian calibration value, reproducing the depth-agnostic
//! behavior it is compared against.
//!
//! [`render_spectrum`] culls Gaussians by angular footprint before blending;
//! [`render_spectrum_oracle`] blends every Gaussian on every ray. Both share
//! the same term collection and shading, and must agree.

use crate::field::{GaussianField, Ray, DENSITY_CUTOFF};
use crate::geom::UnitDir;
use crate::grid::SphericalGrid;
use crate::sh;
use crate::spectrum::{RxPose, SpatialSpectrum, SpectrumPixel};
use crate::trace::free_space_gain;
use crate::SPEED_OF_LIGHT;
use nalgebra::Point3;
use rayon::prelude::*;

/// Blending stops once the transmittance falls below this.
pub const TRANSMITTANCE_CUTOFF: f64 = 1e-6;

/// Rendering variant.
#[derive(Clone, Copy)]
pub enum RenderMode<'a> {
    /// Per-term distances l_prev + l_vd,k; ToF from the dominant Gaussian's
    /// actual view depth.
    FullPath,
    /// Distances frozen at per-Gaussian calibration view depths (slice is
    /// indexed by Gaussian, as produced by
    /// [`legacy_calibration`](crate::train::legacy_calibration)).
    Legacy(&'a [f64]),
}

/// One alpha-blending term along a ray, in view-depth order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayBlendTerm {
    pub gaussian: usize,
    /// Effective density alpha_k.
    pub alpha: f64,
    /// Accumulated transmittance T_k (T_1 = 1, non-increasing).
    pub transmittance: f64,
    /// Distance from the ray origin to this Gaussian's closest-approach
    /// point, meters.
    pub view_depth: f64,
}

/// Full-path record for a rendering ray, anchored at the pseudo-surface
/// point (the center of the Gaussian with the highest alpha_k * T_k).
#[derive(Debug, Clone, PartialEq)]
pub struct PathContext {
    pub pseudo_surface_point: Point3<f64>,
    /// Path length from the Tx to the pseudo-surface point, meters.
    pub l_prev: f64,
    /// Departure direction at the Tx.
    pub aod: UnitDir,
    /// Product of interaction gains before the final bounce; 1 in
    /// single-bounce mode.
    pub cumulative_gain: f64,
    pub dominant_gaussian_index: usize,
}

/// Rendered channels for one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayRender {
    pub path_gain: f64,
    pub tof_s: f64,
    pub aod: UnitDir,
}

/// Collects blend terms for the ray among `candidates`: densities above
/// `cutoff`, sorted by view depth (ties by index), truncated once the
/// transmittance falls below [`TRANSMITTANCE_CUTOFF`].
fn collect_terms(
    field: &GaussianField,
    ray: &Ray,
    candidates: impl IntoIterator<Item = usize>,
    cutoff: f64,
) -> Vec<RayBlendTerm> {
    let mut hits: Vec<(usize, f64, f64)> = candidates
        .into_iter()
        .filter_map(|i| {
            let g = &field.primitives[i];
            let alpha = g.effective_density(ray);
            (alpha >= cutoff && alpha > 0.0).then(|| (i, g.view_depth(ray), alpha))
        })
        .collect();
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut terms = Vec::with_capacity(hits.len());
    let mut alpha_sum = 0.0f64;
    for (i, depth, alpha) in hits {
        let transmittance = (-alpha_sum).exp();
        if transmittance < TRANSMITTANCE_CUTOFF {
            break;
        }
        terms.push(RayBlendTerm {
            gaussian: i,
            alpha,
            transmittance,
            view_depth: depth,
        });
        alpha_sum += alpha;
    }
    terms
}

/// Index (into `terms`) of the dominant Gaussian: argmax alpha_k * T_k, ties
/// broken by smaller view depth (terms are depth-sorted, first max wins).
fn dominant_term(terms: &[RayBlendTerm]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in terms.iter().enumerate() {
        let c = t.alpha * t.transmittance;
        match best {
            Some((_, bc)) if c <= bc => {}
            _ => best = Some((i, c)),
        }
    }
    best.map(|(i, _)| i)
}

fn path_context(field: &GaussianField, terms: &[RayBlendTerm], ray: &Ray) -> Option<PathContext> {
    let dom = dominant_term(terms)?;
    let g = &field.primitives[terms[dom].gaussian];
    let l_prev = (g.center - field.tx_position).norm();
    let aod = UnitDir::towards(&field.tx_position, &g.center)
        .unwrap_or(ray.dir);
    Some(PathContext {
        pseudo_surface_point: g.center,
        l_prev,
        aod,
        cumulative_gain: 1.0,
        dominant_gaussian_index: terms[dom].gaussian,
    })
}

/// Pseudo-surface point for a ray over the whole field, or `None` when no
/// Gaussian clears the density cutoff.
pub fn pseudo_surface(field: &GaussianField, ray: &Ray) -> Option<PathContext> {
    let terms = collect_terms(field, ray, 0..field.len(), DENSITY_CUTOFF);
    path_context(field, &terms, ray)
}

/// Depth-ordered blend terms of a ray against the whole field.
pub fn ray_blend_terms(field: &GaussianField, ray: &Ray) -> Vec<RayBlendTerm> {
    collect_terms(field, ray, 0..field.len(), DENSITY_CUTOFF)
}

fn shade(
    field: &GaussianField,
    terms: &[RayBlendTerm],
    ctx: &PathContext,
    basis: &[f64],
    mode: RenderMode,
) -> RayRender {
    let lambda = field.wavelength_m();
    let mut gain = 0.0;
    for t in terms {
        let depth = match mode {
            RenderMode::FullPath => t.view_depth,
            RenderMode::Legacy(cal) => cal[t.gaussian],
        };
        let a_n = field.primitives[t.gaussian].decoded_gain_basis(basis);
        gain += t.alpha
            * t.transmittance
            * ctx.cumulative_gain
            * a_n
            * free_space_gain(lambda, ctx.l_prev + depth);
    }
    let dom_depth = {
        let dom = terms
            .iter()
            .find(|t| t.gaussian == ctx.dominant_gaussian_index)
            .expect("dominant term present");
        match mode {
            RenderMode::FullPath => dom.view_depth,
            RenderMode::Legacy(cal) => cal[dom.gaussian],
        }
    };
    RayRender {
        path_gain: gain,
        tof_s: (ctx.l_prev + dom_depth) / SPEED_OF_LIGHT,
        aod: ctx.aod,
    }
}

fn render_ray_candidates(
    field: &GaussianField,
    rx: &Point3<f64>,
    d_render: &UnitDir,
    mode: RenderMode,
    candidates: impl IntoIterator<Item = usize>,
    cutoff: f64,
) -> Option<RayRender> {
    let ray = Ray::new(*rx, *d_render);
    let terms = collect_terms(field, &ray, candidates, cutoff);
    let ctx = path_context(field, &terms, &ray)?;
    let mut basis = vec![0.0; sh::coeff_count(field.sh_degree)];
    sh::sh_basis_into(field.sh_degree, d_render, &mut basis);
    Some(shade(field, &terms, &ctx, &basis, mode))
}

/// Renders one ray against every Gaussian in the field. `None` is a miss
/// (no Gaussian above the density cutoff).
pub fn render_ray(
    field: &GaussianField,
    rx: &Point3<f64>,
    d_render: &UnitDir,
    mode: RenderMode,
) -> Option<RayRender> {
    render_ray_candidates(field, rx, d_render, mode, 0..field.len(), DENSITY_CUTOFF)
}

/// As [`render_ray`] with an explicit density cutoff (0 disables skipping).
pub fn render_ray_with_cutoff(
    field: &GaussianField,
    rx: &Point3<f64>,
    d_render: &UnitDir,
    mode: RenderMode,
    cutoff: f64,
) -> Option<RayRender> {
    render_ray_candidates(field, rx, d_render, mode, 0..field.len(), cutoff)
}

fn ray_render_to_pixel(r: Option<RayRender>) -> SpectrumPixel {
    match r {
        None => SpectrumPixel::MISS,
        Some(r) => {
            let (aod_az, aod_el) = r.aod.to_az_el();
            SpectrumPixel {
                gain: r.path_gain,
                tof_s: r.tof_s,
                aod_az,
                aod_el,
            }
        }
    }
}

/// Brute-force reference renderer: per-ray blending over every Gaussian.
pub fn render_spectrum_oracle(
    field: &GaussianField,
    rx_pose: RxPose,
    grid: SphericalGrid,
    mode: RenderMode,
) -> SpatialSpectrum {
    let pixels: Vec<SpectrumPixel> = (0..grid.n_pixels())
        .into_par_iter()
        .map(|idx| {
            let (row, col) = (idx / grid.n_az, idx % grid.n_az);
            let d = rx_pose.pixel_dir_world(&grid, row, col);
            ray_render_to_pixel(render_ray(field, &rx_pose.position, &d, mode))
        })
        .collect();
    SpatialSpectrum::from_pixels(grid, rx_pose, pixels)
}

/// Per-pixel candidate lists from each Gaussian's angular footprint.
///
/// A Gaussian at distance `dist` whose density falls below the cutoff beyond
/// radius `r` can only touch rays within asin(r / dist) of its center
/// direction; rows and columns are bounded by that spherical cap (with one
/// bin of margin — inclusion is always safe because every candidate is
/// re-tested exactly).
fn candidate_pixels(
    field: &GaussianField,
    rx_pose: &RxPose,
    grid: &SphericalGrid,
) -> Vec<Vec<u32>> {
    let mut candidates: Vec<Vec<u32>> = vec![Vec::new(); grid.n_pixels()];
    let world_to_rx = rx_pose.orientation.inverse();
    for (gi, g) in field.primitives.iter().enumerate() {
        let r_cut = g.cutoff_radius();
        if r_cut <= 0.0 {
            continue;
        }
        let offset = g.center - rx_pose.position;
        let dist = offset.norm();
        if dist <= r_cut || dist < 1e-12 {
            // Receiver inside the footprint: every pixel is a candidate.
            for list in candidates.iter_mut() {
                list.push(gi as u32);
            }
            continue;
        }
        let center_local = world_to_rx.rotate(&offset);
        let (az_c, el_c) = UnitDir::new(center_local)
            .expect("nonzero offset")
            .to_az_el();
        let theta = (r_cut / dist).min(1.0).asin() + 1e-9;
        let cos_theta = theta.cos();

        let el_step = grid.el_step();
        let row_lo = (((std::f64::consts::FRAC_PI_2 - (el_c + theta)) / el_step).floor() as isize
            - 1)
            .max(0) as usize;
        let row_hi = (((std::f64::consts::FRAC_PI_2 - (el_c - theta)) / el_step).floor() as isize
            + 1)
            .min(grid.n_el as isize - 1) as usize;

        let az_step = grid.az_step();
        for row in row_lo..=row_hi {
            let el_r = grid.row_center_el(row);
            // Spherical cap: cos(theta) <= sin(el_r) sin(el_c)
            //                + cos(el_r) cos(el_c) cos(d_az).
            let denom = el_r.cos() * el_c.cos();
            let num = cos_theta - el_r.sin() * el_c.sin();
            let full_row;
            let half_width;
            if denom < 1e-12 {
                if num > 1e-12 {
                    continue;
                }
                full_row = true;
                half_width = 0.0;
            } else {
                let rhs = num / denom;
                if rhs > 1.0 + 1e-9 {
                    continue;
                }
                if rhs <= -1.0 {
                    full_row = true;
                    half_width = 0.0;
                } else {
                    full_row = false;
                    half_width = rhs.clamp(-1.0, 1.0).acos();
                }
            }
            if full_row || half_width + 2.0 * az_step >= std::f64::consts::PI {
                for col in 0..grid.n_az {
                    candidates[grid.pixel_index(row, col)].push(gi as u32);
                }
                continue;
            }
            let span = (half_width / az_step).ceil() as isize + 1;
            let col_c = ((az_c + std::f64::consts::PI) / az_step).floor() as isize;
            for dc in -span..=span {
                let col = (col_c + dc).rem_euclid(grid.n_az as isize) as usize;
                let list = &mut candidates[grid.pixel_index(row, col)];
                if list.last() != Some(&(gi as u32)) {
                    list.push(gi as u32);
                }
            }
        }
    }
    candidates
}

/// Fast spectrum renderer: Gaussians are assigned to pixels by angular
/// footprint, then each pixel blends its candidates. Matches
/// [`render_spectrum_oracle`] exactly (identical term sets and arithmetic).
pub fn render_spectrum(
    field: &GaussianField,
    rx_pose: RxPose,
    grid: SphericalGrid,
    mode: RenderMode,
) -> SpatialSpectrum {
    let candidates = candidate_pixels(field, &rx_pose, &grid);
    let pixels: Vec<SpectrumPixel> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(idx, cand)| {
            let (row, col) = (idx / grid.n_az, idx % grid.n_az);
            let d = rx_pose.pixel_dir_world(&grid, row, col);
            ray_render_to_pixel(render_ray_candidates(
                field,
                &rx_pose.position,
                &d,
                mode,
                cand.into_iter().map(|i| i as usize),
                DENSITY_CUTOFF,
            ))
        })
        .collect();
    SpatialSpectrum::from_pixels(grid, rx_pose, pixels)
}

/// Mode-independent per-pixel geometry of a rendered spectrum. Because field
/// geometry is frozen during training this can be computed once per pose and
/// reused every epoch; shading reduces to
/// `sum_k blend_k * A_k(d) * (lambda / 4 pi (l_prev + depth_k))^2`.
#[derive(Debug, Clone)]
pub struct SpectrumGeometry {
    pub grid: SphericalGrid,
    pub rx_pose: RxPose,
    /// One entry per pixel; `None` marks a miss.
    pub pixels: Vec<Option<PixelGeometry>>,
}

#[derive(Debug, Clone)]
pub struct PixelGeometry {
    pub l_prev: f64,
    pub aod: UnitDir,
    /// Index into `terms` of the dominant Gaussian.
    pub dominant: usize,
    /// SH basis evaluated at the pixel direction.
    pub basis: Vec<f64>,
    pub terms: Vec<TermGeometry>,
}

#[derive(Debug, Clone, Copy)]
pub struct TermGeometry {
    pub gaussian: u32,
    /// alpha_k * T_k.
    pub blend: f64,
    pub view_depth: f64,
}

pub fn spectrum_geometry(
    field: &GaussianField,
    rx_pose: RxPose,
    grid: SphericalGrid,
) -> SpectrumGeometry {
    let candidates = candidate_pixels(field, &rx_pose, &grid);
    let pixels: Vec<Option<PixelGeometry>> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(idx, cand)| {
            let (row, col) = (idx / grid.n_az, idx % grid.n_az);
            let d = rx_pose.pixel_dir_world(&grid, row, col);
            let ray = Ray::new(rx_pose.position, d);
            let terms = collect_terms(
                field,
                &ray,
                cand.into_iter().map(|i| i as usize),
                DENSITY_CUTOFF,
            );
            let ctx = path_context(field, &terms, &ray)?;
            let dominant = terms
                .iter()
                .position(|t| t.gaussian == ctx.dominant_gaussian_index)
                .expect("dominant term present");
            let mut basis = vec![0.0; sh::coeff_count(field.sh_degree)];
            sh::sh_basis_into(field.sh_degree, &d, &mut basis);
            Some(PixelGeometry {
                l_prev: ctx.l_prev,
                aod: ctx.aod,
                dominant,
                basis,
                terms: terms
                    .iter()
                    .map(|t| TermGeometry {
                        gaussian: t.gaussian as u32,
                        blend: t.alpha * t.transmittance,
                        view_depth: t.view_depth,
                    })
                    .collect(),
            })
        })
        .collect();
    SpectrumGeometry {
        grid,
        rx_pose,
        pixels,
    }
}

impl PixelGeometry {
    /// Distance term for the k-th blend entry under a mode.
    pub fn term_distance(&self, k: usize, mode: RenderMode) -> f64 {
        match mode {
            RenderMode::FullPath => self.l_prev + self.terms[k].view_depth,
            RenderMode::Legacy(cal) => self.l_prev + cal[self.terms[k].gaussian as usize],
        }
    }

    /// Shades this pixel; identical arithmetic to the direct renderers.
    pub fn shade(&self, field: &GaussianField, mode: RenderMode) -> SpectrumPixel {
        let lambda = field.wavelength_m();
        let mut gain = 0.0;
        for (k, t) in self.terms.iter().enumerate() {
            let a_n = field.primitives[t.gaussian as usize].decoded_gain_basis(&self.basis);
            gain += t.blend * a_n * free_space_gain(lambda, self.term_distance(k, mode));
        }
        let tof_s =
            (self.l_prev + match mode {
                RenderMode::FullPath => self.terms[self.dominant].view_depth,
                RenderMode::Legacy(cal) => cal[self.terms[self.dominant].gaussian as usize],
            }) / SPEED_OF_LIGHT;
        let (aod_az, aod_el) = self.aod.to_az_el();
        SpectrumPixel {
            gain,
            tof_s,
            aod_az,
            aod_el,
        }
    }
}

impl SpectrumGeometry {
    pub fn shade(&self, field: &GaussianField, mode: RenderMode) -> SpatialSpectrum {
        let pixels: Vec<SpectrumPixel> = self
            .pixels
            .iter()
            .map(|p| match p {
                None => SpectrumPixel::MISS,
                Some(p) => p.shade(field, mode),
            })
            .collect();
        SpatialSpectrum::from_pixels(self.grid, self.rx_pose, pixels)
    }
}
