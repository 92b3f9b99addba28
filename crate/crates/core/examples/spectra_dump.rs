use rrf_core::field::{GaussianField, SeedParams};
use rrf_core::grid::SphericalGrid;
use rrf_core::render::{render_spectrum, RenderMode};
use rrf_core::scene::Scene;
use rrf_core::trace::{generate_dataset, split_test_train};
use rrf_core::train::{train, TrainConfig};
use std::path::Path;

fn db(g: f64) -> f64 { (10.0 * g.log10()).max(-160.0) }

fn top5(s: &rrf_core::spectrum::SpatialSpectrum) -> Vec<((usize, usize), f64)> {
    let grid = s.grid;
    let mut v: Vec<((usize, usize), f64)> = (0..grid.n_pixels())
        .filter(|&i| s.pixels()[i].is_hit())
        .map(|i| ((i / grid.n_az, i % grid.n_az), db(s.pixels()[i].gain)))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v.truncate(5);
    v
}

fn main() {
    let scene = Scene::load(Path::new("scenes/room4.toml")).unwrap();
    let grid = SphericalGrid::new(16, 32).unwrap();
    let dataset = generate_dataset(&scene, 120, grid, 7);
    let (test, pool) = split_test_train(&dataset, 20).unwrap();
    let train_set = pool[..100].to_vec();
    let field = GaussianField::seed_from_scene(&scene, &SeedParams::default()).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.08,
        epochs: std::env::var("EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(600),
        batch_size: 16,
        rng_seed: 3,
        ..Default::default()
    };
    let (trained, _) = train(&field, &train_set, &cfg, RenderMode::FullPath, None).unwrap();
    for s in test.iter().take(4) {
        let r = render_spectrum(&trained, s.rx_pose, grid, RenderMode::FullPath);
        println!("rx {:?}", s.rx_pose.position);
        println!("  truth top5: {:?}", top5(&s.spectrum));
        println!("  rend  top5: {:?}", top5(&r));
        // LoS pixel detail.
        if let Some((tr, tc)) = s.spectrum.argmax_gain() {
            println!(
                "  at truth argmax ({tr},{tc}): truth {:.1} rend {:.1}",
                db(s.spectrum.pixel(tr, tc).gain),
                db(r.pixel(tr, tc).gain)
            );
            for dc in -2i64..=2 {
                let c = ((tc as i64 + dc).rem_euclid(grid.n_az as i64)) as usize;
                print!(
                    "    col {c}: t {:6.1} r {:6.1} | ",
                    db(s.spectrum.pixel(tr, c).gain),
                    db(r.pixel(tr, c).gain)
                );
            }
            println!();
        }
    }
}
