//! One segmentation run end to end: train, render, and write every output
//! file plus the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pvseg_core::image::{colorize, labels_to_gray};
use pvseg_core::train::{train_with_observer, SegmentationResult};
use pvseg_core::{ImageGray, StopReason, TrainConfig};

use crate::error::{CliError, Result};
use crate::io;
use crate::manifest::RunManifest;

pub const LABELS_FILE: &str = "labels.pgm";
pub const RGB_FILE: &str = "segmented_rgb.png";
pub const GRAY_FILE: &str = "segmented_gray.png";
pub const LOSS_FILE: &str = "loss.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct SegmentOptions {
    pub config: TrainConfig,
    pub invert_gray: bool,
    /// Print progress to stderr every this many iterations (0 = silent).
    pub progress_every: usize,
}

#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    pub result: SegmentationResult,
    pub manifest: RunManifest,
}

impl SegmentOutcome {
    pub fn numeric_failure(&self) -> bool {
        self.result.stop_reason == StopReason::NumericFailure
    }
}

/// `iteration,l_fs,l_sc,total` with 1-based iterations.
pub fn loss_csv(result: &SegmentationResult) -> String {
    let mut s = String::from("iteration,l_fs,l_sc,total\n");
    for (i, l) in result.loss_history.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", i + 1, l.l_fs, l.l_sc, l.total);
    }
    s
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Trains on `image` and writes all outputs into `out_dir`.
///
/// A numeric failure is not an error here: partial outputs and a manifest
/// flagged `partial` are written and the outcome reports it.
pub fn segment_image(
    image: &ImageGray,
    command: &str,
    inputs: Vec<PathBuf>,
    out_dir: &Path,
    opts: &SegmentOptions,
) -> Result<SegmentOutcome> {
    ensure_dir(out_dir)?;
    let config = &opts.config;
    let mut manifest = RunManifest::new(command, inputs, out_dir, config);
    manifest.invert_gray = opts.invert_gray;

    let tensor = image.to_tensor()?;
    let start = Instant::now();
    let label = out_dir.display().to_string();
    let outcome = train_with_observer(&tensor, config, |p| {
        if opts.progress_every > 0 && p.iteration % opts.progress_every == 0 {
            eprintln!(
                "[{label}] iter {:>4}  total {:.5}  l_fs {:.5}  l_sc {:.5}  clusters {}",
                p.iteration, p.loss.total, p.loss.l_fs, p.loss.l_sc, p.unique_clusters
            );
        }
    });
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            manifest.error = Some(e.to_string());
            manifest.write(&out_dir.join(MANIFEST_FILE))?;
            return Err(e.into());
        }
    };

    manifest.stop_reason = Some(result.stop_reason);
    manifest.iterations_run = result.iterations_run;
    manifest.unique_clusters_final = Some(result.unique_clusters_final);
    manifest.loss_first = result.loss_history.first().copied();
    manifest.loss_last = result.loss_history.last().copied();
    manifest.partial = result.stop_reason == StopReason::NumericFailure;

    let write_outputs = || -> Result<()> {
        let labels = &result.final_labels;
        io::save_labels_pgm(labels, &out_dir.join(LABELS_FILE))?;
        io::save_rgb_png(&colorize(labels, config.q_max)?, &out_dir.join(RGB_FILE))?;
        let mut gray = labels_to_gray(labels, image)?;
        if opts.invert_gray {
            gray = gray.inverted();
        }
        io::save_png(&gray, &out_dir.join(GRAY_FILE))?;
        let csv_path = out_dir.join(LOSS_FILE);
        std::fs::write(&csv_path, loss_csv(&result)).map_err(|e| CliError::io(&csv_path, e))
    };
    if let Err(e) = write_outputs() {
        manifest.partial = true;
        manifest.error = Some(e.to_string());
        manifest.write(&out_dir.join(MANIFEST_FILE))?;
        return Err(e);
    }
    if manifest.partial {
        manifest.error = Some("non-finite loss or gradient; training stopped early".into());
    }
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(SegmentOutcome { result, manifest })
}
