//! Trains on a synthetic preset scene and prints per-iteration progress.
//!
//! `cargo run --release -p pvseg-core --example preset_run -- [seed] [iterations] [alpha]`

use std::time::Instant;

use pvseg_core::eval::detection_report;
use pvseg_core::synth::{generate_scene, SceneSpec};
use pvseg_core::train::train_with_observer;
use pvseg_core::TrainConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let iters: usize = args.next().map_or(200, |s| s.parse().expect("iterations"));
    let alpha: f64 = args.next().map_or(5.0, |s| s.parse().expect("alpha"));

    let spec = SceneSpec::preset("hotspots3", seed).unwrap();
    let (img, truth) = generate_scene(&spec).unwrap();
    let config = TrainConfig {
        seed,
        max_iterations: iters,
        alpha,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let result = train_with_observer(&img.to_tensor().unwrap(), &config, |p| {
        println!(
            "{:4} {:8.3}s l_fs={:.5} l_sc={:.5} total={:.5} clusters={}",
            p.iteration,
            start.elapsed().as_secs_f64(),
            p.loss.l_fs,
            p.loss.l_sc,
            p.loss.total,
            p.unique_clusters
        );
    })
    .unwrap();
    println!(
        "stop={} iterations={} clusters={}",
        result.stop_reason, result.iterations_run, result.unique_clusters_final
    );
    for d in detection_report(&result.final_labels, &truth, 0.3).unwrap() {
        println!(
            "{:?}: cluster {} iou {:.3} detected {}",
            d.class, d.cluster, d.score, d.detected
        );
    }
}
