//! Baseband channel synthesis: multipath components to discretized CIRs
//! under 2.16 GHz channelization, and strongest-beam selection from spectra.

use crate::error::{Error, Result};
use crate::spectrum::{Mpc, SpatialSpectrum};
use crate::SPEED_OF_LIGHT;
use num_complex::Complex64;
use std::io::Write;

/// Allowed bandwidth multipliers of the 2.16 GHz base channel.
pub const ALLOWED_MULTIPLIERS: [u32; 6] = [1, 2, 4, 8, 16, 32];

pub const BASE_BANDWIDTH_HZ: f64 = 2.16e9;

/// A channelization choice: bandwidth m * 2.16 GHz, sampling interval
/// Ts = 1 / bandwidth, path resolution c * Ts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channelization {
    pub multiplier: u32,
    pub bandwidth_hz: f64,
    pub sample_interval_s: f64,
}

impl Channelization {
    pub fn new(multiplier: u32) -> Result<Self> {
        if !ALLOWED_MULTIPLIERS.contains(&multiplier) {
            return Err(Error::invalid(format!(
                "bandwidth multiplier {multiplier} not in {ALLOWED_MULTIPLIERS:?}"
            )));
        }
        let bandwidth_hz = multiplier as f64 * BASE_BANDWIDTH_HZ;
        Ok(Channelization {
            multiplier,
            bandwidth_hz,
            sample_interval_s: 1.0 / bandwidth_hz,
        })
    }

    /// Multipath length resolution c * Ts, meters.
    pub fn path_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_interval_s
    }
}

/// Baseband channel impulse response on a uniform delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    /// Complex tap amplitudes; index i sits at delay t0 + i * Ts.
    pub taps: Vec<Complex64>,
    /// First-tap delay, seconds (a multiple of Ts).
    pub t0_s: f64,
    pub ts_s: f64,
}

impl Cir {
    pub fn tap_delay(&self, i: usize) -> f64 {
        self.t0_s + i as f64 * self.ts_s
    }

    pub fn nonzero_taps(&self) -> usize {
        self.taps.iter().filter(|t| t.norm_sqr() > 0.0).count()
    }

    /// Total tap power sum |h_i|^2.
    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

/// Discretizes MPCs into a CIR: each component contributes the field
/// amplitude sqrt(alpha_l) e^{j phi_l} to the tap nearest its delay;
/// coincident taps sum coherently. t0 is the minimum delay rounded down to
/// the bin grid.
pub fn mpcs_to_cir(mpcs: &[Mpc], ch: &Channelization) -> Result<Cir> {
    if mpcs.is_empty() {
        return Err(Error::invalid("cannot build a CIR from an empty MPC list"));
    }
    let ts = ch.sample_interval_s;
    let tau_min = mpcs
        .iter()
        .map(|m| m.delay_s)
        .fold(f64::INFINITY, f64::min);
    let t0 = (tau_min / ts).floor() * ts;
    let bins: Vec<usize> = mpcs
        .iter()
        .map(|m| ((m.delay_s - t0) / ts).round() as usize)
        .collect();
    let n = bins.iter().max().copied().unwrap_or(0) + 1;
    let mut taps = vec![Complex64::new(0.0, 0.0); n];
    for (m, &bin) in mpcs.iter().zip(&bins) {
        let amp = m.gain.sqrt();
        taps[bin] += Complex64::from_polar(amp, m.phase_rad);
    }
    Ok(Cir {
        taps,
        t0_s: t0,
        ts_s: ts,
    })
}

/// One selected beam: strongest-pixel Spatial-CSI.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub row: usize,
    pub col: usize,
    /// Arrival direction in the world frame.
    pub aoa: crate::geom::UnitDir,
    pub path_gain: f64,
    pub tof_s: f64,
    pub aod_az: f64,
    pub aod_el: f64,
}

/// Top-k pixels by path gain, descending; ties broken by (row, col) order.
/// Miss pixels never qualify, so an all-miss spectrum yields an empty list.
pub fn best_beams(spectrum: &SpatialSpectrum, k: usize) -> Result<Vec<Beam>> {
    if k == 0 {
        return Err(Error::invalid("beam count must be at least 1"));
    }
    let grid = spectrum.grid;
    let mut order: Vec<usize> = (0..grid.n_pixels())
        .filter(|&i| spectrum.pixels()[i].is_hit())
        .collect();
    order.sort_by(|&a, &b| {
        spectrum.pixels()[b]
            .gain
            .total_cmp(&spectrum.pixels()[a].gain)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order
        .into_iter()
        .map(|i| {
            let (row, col) = (i / grid.n_az, i % grid.n_az);
            let px = &spectrum.pixels()[i];
            Beam {
                row,
                col,
                aoa: spectrum.rx_pose.pixel_dir_world(&grid, row, col),
                path_gain: px.gain,
                tof_s: px.tof_s,
                aod_az: px.aod_az,
                aod_el: px.aod_el,
            }
        })
        .collect())
}

/// Writes a CIR as a textual table: `delay_s real imag`, one tap per line.
pub fn write_cir_text(cir: &Cir, w: &mut impl Write) -> Result<()> {
    writeln!(w, "# delay_s\treal\timag")?;
    for (i, tap) in cir.taps.iter().enumerate() {
        writeln!(w, "{:.15e}\t{:.15e}\t{:.15e}", cir.tap_delay(i), tap.re, tap.im)?;
    }
    Ok(())
}

/// Binary CIR variant: header (tap count u32, t0 f64, Ts f64, all little
/// endian) followed by interleaved re/im binary32 pairs.
pub fn write_cir_binary(cir: &Cir, w: &mut impl Write) -> Result<()> {
    use byteorder::{LittleEndian, WriteBytesExt};
    w.write_u32::<LittleEndian>(cir.taps.len() as u32)?;
    w.write_f64::<LittleEndian>(cir.t0_s)?;
    w.write_f64::<LittleEndian>(cir.ts_s)?;
    for tap in &cir.taps {
        w.write_f32::<LittleEndian>(tap.re as f32)?;
        w.write_f32::<LittleEndian>(tap.im as f32)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{RotationQ, UnitDir};
    use crate::grid::SphericalGrid;
    use crate::spectrum::{RxPose, SpectrumPixel};
    use approx::assert_relative_eq;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mpc_at_path_len(len_m: f64, gain: f64, phase: f64) -> Mpc {
        Mpc {
            gain,
            phase_rad: phase,
            delay_s: len_m / SPEED_OF_LIGHT,
            aoa: UnitDir::from_components(1.0, 0.0, 0.0).unwrap(),
            aod: UnitDir::from_components(1.0, 0.0, 0.0).unwrap(),
            bounce_point: None,
        }
    }

    #[test]
    fn channelization_values() {
        let c1 = Channelization::new(1).unwrap();
        // Ts is computed, not the rounded figure sometimes quoted: 462.96 ps.
        assert_eq!(c1.sample_interval_s, 1.0 / 2.16e9);
        assert!((c1.sample_interval_s * 1e12 - 462.96).abs() < 0.01);
        assert!((c1.path_resolution_m() - 0.139).abs() < 1e-3);

        let c32 = Channelization::new(32).unwrap();
        assert_eq!(c32.sample_interval_s, 1.0 / (32.0 * 2.16e9));
        assert!((c32.sample_interval_s * 1e12 - 14.467).abs() < 0.01);
        assert!((c32.path_resolution_m() - 0.00434).abs() < 1e-5);

        assert!((c1.sample_interval_s * c1.bandwidth_hz - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_multiplier_rejected() {
        assert!(Channelization::new(3).is_err());
        assert!(Channelization::new(0).is_err());
        assert!(Channelization::new(64).is_err());
    }

    #[test]
    fn close_paths_merge_at_coarse_resolution() {
        let mpcs = [
            mpc_at_path_len(3.00, 1e-9, 0.0),
            mpc_at_path_len(3.05, 1e-9, 0.0),
        ];
        let cir = mpcs_to_cir(&mpcs, &Channelization::new(1).unwrap()).unwrap();
        assert_eq!(cir.nonzero_taps(), 1);
    }

    #[test]
    fn close_paths_split_at_fine_resolution() {
        let mpcs = [
            mpc_at_path_len(3.00, 1e-9, 0.0),
            mpc_at_path_len(3.05, 1e-9, 0.0),
        ];
        let ch = Channelization::new(32).unwrap();
        let cir = mpcs_to_cir(&mpcs, &ch).unwrap();
        assert_eq!(cir.nonzero_taps(), 2);
        // Exact bin indices from the definition.
        let ts = ch.sample_interval_s;
        let t0 = (mpcs[0].delay_s / ts).floor() * ts;
        let b0 = ((mpcs[0].delay_s - t0) / ts).round() as usize;
        let b1 = ((mpcs[1].delay_s - t0) / ts).round() as usize;
        assert!(b1 - b0 == 11 || b1 - b0 == 12, "bins {b0} and {b1}");
        assert!(cir.taps[b0].norm() > 0.0 && cir.taps[b1].norm() > 0.0);
    }

    #[test]
    fn single_mpc_amplitude_is_sqrt_gain() {
        let cir = mpcs_to_cir(
            &[mpc_at_path_len(2.0, 4e-10, 0.0)],
            &Channelization::new(1).unwrap(),
        )
        .unwrap();
        assert_eq!(cir.nonzero_taps(), 1);
        assert_relative_eq!(cir.taps[0].re, 2e-5, max_relative = 1e-12);
        assert_eq!(cir.taps[0].im, 0.0);
    }

    #[test]
    fn empty_mpcs_error() {
        assert!(mpcs_to_cir(&[], &Channelization::new(1).unwrap()).is_err());
    }

    #[test]
    fn power_is_conserved_on_disjoint_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = Channelization::new(4).unwrap();
        for _ in 0..50 {
            // Delays far enough apart that every MPC gets its own bin.
            let mut mpcs = Vec::new();
            let mut len = 1.0;
            for _ in 0..6 {
                len += rng.gen_range(2.0 * ch.path_resolution_m()..1.0);
                mpcs.push(mpc_at_path_len(len, rng.gen_range(1e-12..1e-8), rng.gen_range(0.0..6.28)));
            }
            let cir = mpcs_to_cir(&mpcs, &ch).unwrap();
            assert_eq!(cir.nonzero_taps(), mpcs.len());
            let total: f64 = mpcs.iter().map(|m| m.gain).sum();
            assert_relative_eq!(cir.power(), total, max_relative = 1e-12);
        }
    }

    #[test]
    fn finer_channelization_preserves_separation() {
        // For delays at least one coarse bin apart, every finer channelization
        // also separates them.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let coarse_idx = rng.gen_range(0..ALLOWED_MULTIPLIERS.len() - 1);
            let coarse = Channelization::new(ALLOWED_MULTIPLIERS[coarse_idx]).unwrap();
            let len1 = rng.gen_range(1.0..10.0);
            let gap = rng.gen_range(1.0..4.0) * coarse.path_resolution_m();
            let mpcs = [
                mpc_at_path_len(len1, 1e-9, 0.0),
                mpc_at_path_len(len1 + gap, 1e-9, 0.0),
            ];
            let cir_coarse = mpcs_to_cir(&mpcs, &coarse).unwrap();
            assert_eq!(cir_coarse.nonzero_taps(), 2);
            for &m in &ALLOWED_MULTIPLIERS[coarse_idx + 1..] {
                let fine = Channelization::new(m).unwrap();
                let cir_fine = mpcs_to_cir(&mpcs, &fine).unwrap();
                assert_eq!(cir_fine.nonzero_taps(), 2, "m={m} merged a separated pair");
            }
        }
    }

    fn spectrum_with(pixels: &[(usize, usize, f64)]) -> SpatialSpectrum {
        let grid = SphericalGrid::new(4, 8).unwrap();
        let pose = RxPose::new(Point3::new(0.0, 0.0, 0.0), RotationQ::identity());
        let mut s = SpatialSpectrum::empty(grid, pose);
        for &(row, col, gain) in pixels {
            *s.pixel_mut(row, col) = SpectrumPixel {
                gain,
                tof_s: 1e-9,
                aod_az: 0.1,
                aod_el: 0.2,
            };
        }
        s
    }

    #[test]
    fn best_beams_fewer_hits_than_k() {
        let s = spectrum_with(&[(1, 2, 1e-9)]);
        let beams = best_beams(&s, 3).unwrap();
        assert_eq!(beams.len(), 1);
        assert_eq!((beams[0].row, beams[0].col), (1, 2));
    }

    #[test]
    fn best_beams_takes_argmax() {
        let s = spectrum_with(&[(0, 0, 1e-9), (2, 5, 2e-9)]);
        let beams = best_beams(&s, 1).unwrap();
        assert_eq!((beams[0].row, beams[0].col), (2, 5));
        assert_eq!(beams[0].path_gain, 2e-9);
    }

    #[test]
    fn best_beams_tie_breaks_row_col() {
        let s = spectrum_with(&[(2, 5, 1e-9), (0, 3, 1e-9), (2, 1, 1e-9)]);
        let beams = best_beams(&s, 2).unwrap();
        assert_eq!((beams[0].row, beams[0].col), (0, 3));
        assert_eq!((beams[1].row, beams[1].col), (2, 1));
    }

    #[test]
    fn best_beams_empty_spectrum() {
        let s = spectrum_with(&[]);
        assert!(best_beams(&s, 2).unwrap().is_empty());
        assert!(best_beams(&s, 0).is_err());
    }

    #[test]
    fn cir_text_export_round_numbers() {
        let cir = mpcs_to_cir(
            &[mpc_at_path_len(2.0, 4e-10, 0.0)],
            &Channelization::new(1).unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_cir_text(&cir, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() == cir.taps.len() + 1);
        assert!(text.contains('\t'));
    }
}
