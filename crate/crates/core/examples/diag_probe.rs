use rrf_core::field::{GaussianField, SeedParams};
use rrf_core::grid::SphericalGrid;
use rrf_core::render::{render_spectrum, RenderMode};
use rrf_core::scene::Scene;
use rrf_core::trace::{generate_dataset, split_test_train};
use rrf_core::train::{legacy_calibration, train, TrainConfig};
use std::path::Path;

fn db(g: f64) -> f64 {
    (10.0 * g.log10()).max(-160.0)
}

fn main() {
    let scene = Scene::load(Path::new("scenes/room4.toml")).unwrap();
    let grid = SphericalGrid::new(24, 48).unwrap();
    let dataset = generate_dataset(&scene, 120, grid, 7);
    let (test, pool) = split_test_train(&dataset, 20).unwrap();
    let train_set = pool[..100].to_vec();
    let field = GaussianField::seed_from_scene(&scene, &SeedParams { sh_degree: 4, ..Default::default() }).unwrap();
    let cfg = TrainConfig {
        learning_rate: std::env::var("LR").map(|v| v.parse().unwrap()).unwrap_or(0.08),
        epochs: std::env::var("EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(600),
        batch_size: 16,
        rng_seed: 3,
        weight_decay: std::env::var("WD").map(|v| v.parse().unwrap()).unwrap_or(2e-3),
        ..Default::default()
    };

    for legacy in [false, true] {
        let cal;
        let mode = if legacy {
            cal = legacy_calibration(&field, &train_set);
            RenderMode::Legacy(&cal)
        } else {
            RenderMode::FullPath
        };
        let (trained, report) = train(&field, &train_set, &cfg, mode, Some(&test)).unwrap();
        println!(
            "== {} train_psnr {:.2} test_psnr {:.2}",
            if legacy { "legacy" } else { "full" },
            report.train_psnr_db,
            report.test_psnr_db.unwrap()
        );
        // Error decomposition over test pixels.
        let mut class = [(0usize, 0.0f64); 4]; // both-hit, pred-only, truth-only, both-miss
        let mut beam_ok = 0;
        for s in &test {
            let r = render_spectrum(&trained, s.rx_pose, grid, mode);
            for (rp, tp) in r.pixels().iter().zip(s.spectrum.pixels()) {
                let idx = match (rp.is_hit(), tp.is_hit()) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                let e = (db(rp.gain) - db(tp.gain)).abs();
                class[idx].0 += 1;
                class[idx].1 += e * e;
            }
            let pa = r.argmax_gain();
            let ta = s.spectrum.argmax_gain();
            if let (Some(p), Some(t)) = (pa, ta) {
                let dc = p.1.abs_diff(t.1);
                let dc = dc.min(grid.n_az - dc);
                if p.0.abs_diff(t.0) <= 1 && dc <= 1 {
                    beam_ok += 1;
                } else {
                    let tr_at_p = s.spectrum.pixel(p.0, p.1);
                    let r_at_t = r.pixel(t.0, t.1);
                    println!(
                        "  beam miss: pred {:?} ({:.1} dB rend, {:.1} dB truth) truth {:?} ({:.1} dB truth, {:.1} dB rend)",
                        p, db(r.pixel(p.0, p.1).gain), db(tr_at_p.gain),
                        t, db(s.spectrum.pixel(t.0, t.1).gain), db(r_at_t.gain),
                    );
                }
            }
        }
        for (name, (n, se)) in ["both-hit", "pred-only", "truth-only", "both-miss"]
            .iter()
            .zip(&class)
        {
            println!(
                "  {name}: {n} px, rmse {:.2} dB",
                (se / (*n).max(1) as f64).sqrt()
            );
        }
        println!("  beam_ok {beam_ok}/20");
    }
}
