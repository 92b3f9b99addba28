use rrf_core::field::SeedParams;
use rrf_core::grid::SphericalGrid;
use rrf_core::metrics::MetricsConfig;
use rrf_core::scene::Scene;
use rrf_core::sweep::{sweep, sweep_table_tsv, SweepConfig};
use rrf_core::train::TrainConfig;
use std::path::Path;
use std::time::Instant;

fn main() {
    let scene = Scene::load(Path::new("scenes/room4.toml")).unwrap();
    let cfg = SweepConfig {
        sizes: vec![10, 20, 50, 100],
        test_size: 20,
        n_rx: None,
        grid: SphericalGrid::new(24, 48).unwrap(),
        dataset_seed: 7,
        seed_params: SeedParams { sh_degree: 4, ..Default::default() },
        train: TrainConfig {
            learning_rate: std::env::var("LR").map(|v| v.parse().unwrap()).unwrap_or(0.08),
            epochs: std::env::var("EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(400),
            batch_size: 16,
            rng_seed: 3,
            weight_decay: 5e-3,
            floor_db: -115.0,
            ..Default::default()
        },
        metrics: MetricsConfig { floor_db: -115.0, ..Default::default() },
    };
    let t0 = Instant::now();
    let out = sweep(&scene, &cfg).unwrap();
    println!("{}", sweep_table_tsv(&out.rows));
    println!("total wall: {:.1} s", t0.elapsed().as_secs_f64());
    for t in &out.trained {
        println!(
            "size {:3} {:9}  train_psnr {:6.2}  test_psnr {:6.2}  beam_hit {:.2}  aoa_err {:.2} deg",
            t.size,
            t.variant.to_string(),
            t.report.train_psnr_db,
            t.report.test_psnr_db.unwrap_or(f64::NAN),
            t.eval.beam_hit_rate,
            t.eval.beam_aoa_error_mean_deg,
        );
    }
}
