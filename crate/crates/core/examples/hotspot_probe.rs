use rrf_core::field::{GaussianField, SeedParams, Ray};
use rrf_core::grid::SphericalGrid;
use rrf_core::render::{ray_blend_terms, render_spectrum, spectrum_geometry, RenderMode};
use rrf_core::scene::Scene;
use rrf_core::trace::{generate_dataset, split_test_train};
use rrf_core::train::{train, TrainConfig};
use std::path::Path;

fn db(g: f64) -> f64 { (10.0 * g.log10()).max(-160.0) }

fn main() {
    let scene = Scene::load(Path::new("scenes/room4.toml")).unwrap();
    let grid = SphericalGrid::new(24, 48).unwrap();
    let dataset = generate_dataset(&scene, 120, grid, 7);
    let (test, pool) = split_test_train(&dataset, 20).unwrap();
    let train_set = pool[..100].to_vec();
    let field = GaussianField::seed_from_scene(&scene, &SeedParams { sh_degree: 4, ..Default::default() }).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.08,
        epochs: 400,
        batch_size: 16,
        rng_seed: 3,
        weight_decay: 5e-3,
        ..Default::default()
    };
    let (trained, _) = train(&field, &train_set, &cfg, RenderMode::FullPath, None).unwrap();

    // Count training-ray hits per gaussian.
    let mut hits = vec![0u32; field.len()];
    for s in &train_set {
        let geom = spectrum_geometry(&field, s.rx_pose, grid);
        for px in geom.pixels.iter().flatten() {
            for t in &px.terms {
                hits[t.gaussian as usize] += 1;
            }
        }
    }

    // Find the hottest over-rendered test pixel.
    let mut worst: Option<(usize, usize, usize, f64, f64)> = None;
    for (si, s) in test.iter().enumerate() {
        let r = render_spectrum(&trained, s.rx_pose, grid, RenderMode::FullPath);
        for row in 0..grid.n_el {
            for col in 0..grid.n_az {
                let (rg, tg) = (db(r.pixel(row, col).gain), db(s.spectrum.pixel(row, col).gain));
                let over = rg - tg;
                if worst.map_or(true, |w| over > w.4 - w.3) {
                    worst = Some((si, row, col, tg, rg));
                }
            }
        }
    }
    let (si, row, col, tg, rg) = worst.unwrap();
    println!("worst over-render: sample {si} px ({row},{col}) truth {tg:.1} rend {rg:.1}");
    let s = &test[si];
    let d = s.rx_pose.pixel_dir_world(&grid, row, col);
    let ray = Ray::new(s.rx_pose.position, d);
    let mut terms = ray_blend_terms(&trained, &ray);
    println!("total terms on ray: {}", terms.len());
    let lambda = trained.wavelength_m();
    let ctx = rrf_core::render::pseudo_surface(&trained, &ray).unwrap();
    terms.sort_by(|a, b| {
        let ca = a.alpha * a.transmittance * trained.primitives[a.gaussian].decoded_gain(&d)
            * rrf_core::trace::free_space_gain(lambda, ctx.l_prev + a.view_depth);
        let cb = b.alpha * b.transmittance * trained.primitives[b.gaussian].decoded_gain(&d)
            * rrf_core::trace::free_space_gain(lambda, ctx.l_prev + b.view_depth);
        cb.total_cmp(&ca)
    });
    println!("l_prev {:.2} dominant g{}", ctx.l_prev, ctx.dominant_gaussian_index);
    println!("rx {:?} dir ({:.3},{:.3},{:.3})", s.rx_pose.position, d.x(), d.y(), d.z());
    for t in terms.iter().take(8) {
        let g = &trained.primitives[t.gaussian];
        let a = g.decoded_gain(&d);
        println!(
            "  g{} center ({:.2},{:.2},{:.2}) alpha {:.3e} T {:.3} depth {:.2} A {:.3e} ({:+.1} dB) dc {:.2} |coeffs| {:.2} train_hits {}",
            t.gaussian, g.center.x, g.center.y, g.center.z, t.alpha, t.transmittance,
            t.view_depth, a, 10.0 * a.log10(),
            g.gain_sh.coeffs()[0],
            g.gain_sh.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt(),
            hits[t.gaussian],
        );
    }
}
