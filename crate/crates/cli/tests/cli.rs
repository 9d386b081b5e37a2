use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pvseg::io::{load_labels_pgm, save_pgm};
use pvseg::manifest::RunManifest;
use pvseg_core::synth::{generate_scene, SceneSpec};
use pvseg_core::train::StopReason;

const SMALL_SCENE: &str = "\
width = 48
height = 40
seed = 2
background = 0.15
panel = 0.45
noise_sigma = 0.02
grid.origin_x = 4
grid.origin_y = 4
grid.rows = 1
grid.cols = 2
grid.cell_width = 18
grid.cell_height = 32
grid.gap = 4
hotspot = 13 20 5 0.75
trail = 2 0.65 30,8 34,20 30,32
";

/// Cheap training flags so each invocation finishes in well under a second.
const FAST: [&str; 6] = ["--iters", "4", "--channels", "8", "--q-max", "8"];

fn run(args: Vec<std::ffi::OsString>) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvseg"))
        .arg("-q")
        .args(args)
        .output()
        .unwrap()
}

fn os(parts: &[&dyn AsRef<std::ffi::OsStr>]) -> Vec<std::ffi::OsString> {
    parts.iter().map(|p| p.as_ref().to_owned()).collect()
}

fn small_input(dir: &Path) -> std::path::PathBuf {
    let spec = pvseg::scene_file::parse(SMALL_SCENE).unwrap();
    let (img, _) = generate_scene(&spec).unwrap();
    let path = dir.join("scene.pgm");
    save_pgm(&img, &path).unwrap();
    path
}

#[test]
fn missing_input_is_a_usage_error() {
    let out = run(os(&[&"segment", &"--out", &"x"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn malformed_alpha_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_input(dir.path());
    let out = run(os(&[
        &"sweep",
        &"--alphas",
        &"1,,5",
        &"--input",
        &input,
        &"--out",
        &dir.path().join("s"),
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unreadable_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.pgm");
    let out = run(os(&[
        &"segment",
        &"--input",
        &missing,
        &"--out",
        &dir.path().join("o"),
    ]));
    assert_eq!(out.status.code(), Some(3));

    let garbage = dir.path().join("garbage.png");
    fs::write(&garbage, b"not an image").unwrap();
    let out = run(os(&[
        &"segment",
        &"--input",
        &garbage,
        &"--out",
        &dir.path().join("o"),
    ]));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn diverging_run_exits_with_numeric_failure_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_input(dir.path());
    let out_dir = dir.path().join("o");
    let mut args = os(&[
        &"segment",
        &"--input",
        &input,
        &"--out",
        &out_dir,
        &"--lr",
        &"1e308",
        &"--loss-reduction",
        &"sum",
    ]);
    args.extend(os(&[
        &"--iters",
        &"10",
        &"--channels",
        &"8",
        &"--q-max",
        &"8",
        &"--q-min",
        &"1",
    ]));
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = RunManifest::read(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.stop_reason, Some(StopReason::NumericFailure));
}

#[test]
fn segment_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_input(dir.path());
    let out_dir = dir.path().join("o");
    let mut args = os(&[&"segment", &"--input", &input, &"--out", &out_dir]);
    args.extend(FAST.iter().map(|s| s.into()));
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    for f in [
        "labels.pgm",
        "segmented_rgb.png",
        "segmented_gray.png",
        "loss.csv",
        "manifest.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let labels = load_labels_pgm(&out_dir.join("labels.pgm")).unwrap();
    assert_eq!((labels.width(), labels.height()), (48, 40));
    assert!(labels.ids().iter().all(|&id| id < 8));

    let csv = fs::read_to_string(out_dir.join("loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,l_fs,l_sc,total"));
    let rows: Vec<&str> = lines.collect();
    let manifest = RunManifest::read(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(rows.len(), manifest.iterations_run);
    assert!(rows[0].starts_with("1,"));
    assert_eq!(manifest.config.max_iterations, 4);
    assert_eq!(
        manifest.unique_clusters_final,
        Some(pvseg_core::net::count_unique(&labels))
    );
}

#[test]
fn sweep_writes_one_directory_per_alpha_and_a_combined_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_input(dir.path());
    let mut csvs = Vec::new();
    for jobs in ["1", "3"] {
        let out_dir = dir.path().join(format!("sweep{jobs}"));
        let mut args = os(&[
            &"sweep",
            &"--alphas",
            &"1,5,10",
            &"--jobs",
            &jobs,
            &"--input",
            &input,
            &"--out",
            &out_dir,
        ]);
        args.extend(FAST.iter().map(|s| s.into()));
        let out = run(args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        for sub in ["alpha_1", "alpha_5", "alpha_10"] {
            assert!(out_dir.join(sub).join("labels.pgm").is_file(), "{sub}");
        }
        let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
        let alphas: std::collections::BTreeSet<&str> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(alphas.len(), 3);
        assert!(csv.starts_with("alpha,iteration,total\n"));
        csvs.push(csv);
    }
    assert_eq!(csvs[0], csvs[1], "row order must not depend on --jobs");
}

#[test]
fn single_alpha_sweep_matches_segment() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_input(dir.path());
    let seg = dir.path().join("seg");
    let sweep = dir.path().join("sweep");
    let mut a = os(&[
        &"segment", &"--alpha", &"5", &"--input", &input, &"--out", &seg,
    ]);
    a.extend(FAST.iter().map(|s| s.into()));
    let mut b = os(&[
        &"sweep",
        &"--alphas",
        &"5",
        &"--input",
        &input,
        &"--out",
        &sweep,
    ]);
    b.extend(FAST.iter().map(|s| s.into()));
    assert_eq!(run(a).status.code(), Some(0));
    assert_eq!(run(b).status.code(), Some(0));
    for f in ["labels.pgm", "loss.csv", "segmented_rgb.png"] {
        assert_eq!(
            fs::read(seg.join(f)).unwrap(),
            fs::read(sweep.join("alpha_5").join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(sweep.join("sweep.csv").is_file());
}

#[test]
fn synth_preset_writes_scene_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(os(&[
        &"synth",
        &"--preset",
        &"hotspots3",
        &"--seed",
        &"4",
        &"--out",
        &dir.path(),
    ]));
    assert_eq!(out.status.code(), Some(0));
    for f in ["scene.png", "scene.pgm", "truth.pgm", "scene.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let written = fs::read_to_string(dir.path().join("scene.txt")).unwrap();
    let spec = pvseg::scene_file::parse(&written).unwrap();
    assert_eq!(spec, SceneSpec::preset("hotspots3", 4).unwrap());
}

#[test]
fn synth_unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(os(&[&"synth", &"--preset", &"nope", &"--out", &dir.path()]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluation_at_full_overlap_threshold_detects_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("scene.txt");
    fs::write(&spec_path, SMALL_SCENE).unwrap();
    let out_dir = dir.path().join("o");
    let mut args = os(&[
        &"synth",
        &"--spec",
        &spec_path,
        &"--evaluate",
        &"--tau",
        &"1.0",
        &"--out",
        &out_dir,
    ]);
    args.extend(FAST.iter().map(|s| s.into()));
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("hotspot"));

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    let classes = metrics["classes"].as_array().unwrap();
    let hotspot = classes
        .iter()
        .find(|c| c["class"] == "hotspot")
        .expect("hotspot entry");
    assert_eq!(hotspot["detected"], false);
    assert!(out_dir.join("manifest.json").is_file());
    assert!(out_dir.join("labels.pgm").is_file());
}
