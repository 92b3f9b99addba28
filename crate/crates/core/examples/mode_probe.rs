use rrf_core::field::{GaussianField, SeedParams};
use rrf_core::grid::SphericalGrid;
use rrf_core::render::{render_spectrum, RenderMode};
use rrf_core::scene::Scene;
use rrf_core::trace::{generate_dataset, split_test_train};
use rrf_core::train::legacy_calibration;
use std::path::Path;

fn main() {
    let scene = Scene::load(Path::new("scenes/room4.toml")).unwrap();
    let grid = SphericalGrid::new(16, 32).unwrap();
    let dataset = generate_dataset(&scene, 30, grid, 7);
    let (test, pool) = split_test_train(&dataset, 10).unwrap();
    let train_set = pool[..20].to_vec();
    let field = GaussianField::seed_from_scene(&scene, &SeedParams::default()).unwrap();
    println!("gaussians: {}", field.len());
    let cal = legacy_calibration(&field, &train_set);
    let n_hit = cal.iter().filter(|&&c| c != 0.0).count();
    let mean = cal.iter().sum::<f64>() / cal.len() as f64;
    let min = cal.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = cal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("cal: n={} nonzero={} mean={:.3} min={:.3} max={:.3}", cal.len(), n_hit, mean, min, max);
    let pose = test[0].rx_pose;
    let full = render_spectrum(&field, pose, grid, RenderMode::FullPath);
    let leg = render_spectrum(&field, pose, grid, RenderMode::Legacy(&cal));
    let mut max_rel: f64 = 0.0;
    let mut diffs = 0;
    for (a, b) in full.pixels().iter().zip(leg.pixels()) {
        if a.gain != b.gain {
            diffs += 1;
            if b.gain > 0.0 {
                max_rel = max_rel.max((a.gain - b.gain).abs() / b.gain);
            }
        }
    }
    println!("differing pixels: {diffs}/{}, max rel {max_rel:.3}", grid.n_pixels());
}
