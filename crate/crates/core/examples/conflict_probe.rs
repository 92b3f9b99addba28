use nalgebra::{Point3, Vector3};
use rrf_core::field::{GaussianField, GaussianPrimitive};
use rrf_core::geom::RotationQ;
use rrf_core::grid::SphericalGrid;
use rrf_core::render::{render_spectrum, RenderMode};
use rrf_core::sh::ShCoeffs;
use rrf_core::spectrum::{RxPose, SpatialSpectrum, SpectrumPixel};
use rrf_core::trace::{free_space_gain, RxSample};
use rrf_core::train::{train, TrainConfig};

fn main() {
    // One gaussian at x=0 wall height of rx; tx 0.3 m behind it.
    let center = Point3::new(0.0, 0.0, 0.0);
    let tx = Point3::new(-0.3, 0.0, 0.0);
    let field = GaussianField {
        primitives: vec![GaussianPrimitive {
            center,
            scale: Vector3::new(0.1, 0.1, 0.1),
            rotation: RotationQ::identity(),
            base_density: 0.8,
            gain_sh: ShCoeffs::zeros(3).unwrap(),
        }],
        tx_position: tx,
        carrier_frequency_hz: 3.0e11,
        sh_degree: 3,
    };
    let grid = SphericalGrid::new(1, 1).unwrap();
    let lambda = field.wavelength_m();
    // Two training rx along +x of the gaussian, depths 1.5 and 4.0.
    // Truth = LoS free-space at |rx - tx| = depth + 0.3.
    let mk = |depth: f64| {
        let pos = Point3::new(depth, 0.0, 0.0);
        // Pixel (0,0) of a 1x1 grid points at +x; rotate rx so it faces -x.
        let pose = RxPose::new(
            pos,
            RotationQ::from_axis_angle(
                rrf_core::geom::UnitDir::from_components(0.0, 0.0, 1.0).unwrap(),
                std::f64::consts::PI,
            ),
        );
        let mut sp = SpatialSpectrum::empty(grid, pose);
        *sp.pixel_mut(0, 0) = SpectrumPixel {
            gain: free_space_gain(lambda, depth + 0.3),
            tof_s: 0.0,
            aod_az: 0.0,
            aod_el: 0.0,
        };
        RxSample { rx_pose: pose, mpcs: vec![], spectrum: sp }
    };
    let s1 = mk(1.5);
    let s2 = mk(4.0);
    let samples = [&s1, &s2];
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 800,
        batch_size: 2,
        rng_seed: 1,
        ..Default::default()
    };
    let cal = rrf_core::train::legacy_calibration(&field, &samples);
    println!("cal = {:?} (expect ~2.75)", cal);
    for (name, mode) in [
        ("full", RenderMode::FullPath),
        ("legacy", RenderMode::Legacy(&cal)),
    ] {
        let (trained, report) = train(&field, &samples, &cfg, mode, None).unwrap();
        for s in [&s1, &s2] {
            let r = render_spectrum(&trained, s.rx_pose, grid, mode);
            let err = 10.0 * (r.pixel(0, 0).gain / s.spectrum.pixel(0, 0).gain).log10();
            println!(
                "{name}: rx depth {:.1}: rendered err {:+.2} dB (final loss {:.4})",
                s.rx_pose.position.x, err, report.loss_trace.last().unwrap()
            );
        }
    }
}
