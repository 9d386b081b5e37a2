//! Command-line interface: `segment`, `sweep` and `synth`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use pvseg_core::eval::{detection_report, ClassDetection};
use pvseg_core::synth::{generate_scene, SceneSpec, PRESETS};
use pvseg_core::{Reduction, TrainConfig};
use serde::Serialize;

use crate::error::{CliError, ExitCode, Result};
use crate::io;
use crate::pipeline::{ensure_dir, segment_image, SegmentOptions, SegmentOutcome};
use crate::scene_file;

#[derive(Debug, Parser)]
#[command(
    name = "pvseg",
    version,
    about = "Unsupervised segmentation of PV thermal images"
)]
pub struct Cli {
    /// Suppress progress output.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one grayscale image.
    Segment(SegmentArgs),
    /// Segment one image once per alpha value.
    Sweep(SweepArgs),
    /// Generate a synthetic scene with ground truth, optionally segment and score it.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Weight of the spatial-continuity loss.
    #[arg(long, default_value_t = 5.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// Response channels, i.e. the maximum number of clusters.
    #[arg(long = "q-max", default_value_t = 18)]
    pub q_max: usize,
    /// Stop once this many clusters or fewer remain.
    #[arg(long = "q-min", default_value_t = 4)]
    pub q_min: usize,
    /// Feature channels of the convolutional modules.
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    /// Seed for parameter initialization (and scene placement for `synth`). Default 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "loss-reduction", value_enum, default_value_t = ReductionArg::Mean)]
    pub loss_reduction: ReductionArg,
    /// Render faults dark in segmented_gray.png.
    #[arg(long = "invert-gray")]
    pub invert_gray: bool,
}

impl TrainArgs {
    pub fn config(&self) -> Result<TrainConfig> {
        if self.q_max > 256 {
            return Err(CliError::Usage(format!(
                "--q-max {} too large: labels.pgm stores ids in 8 bits (max 256)",
                self.q_max
            )));
        }
        let config = TrainConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            max_iterations: self.iters,
            alpha: self.alpha,
            feature_channels: self.channels,
            q_max: self.q_max,
            q_min: self.q_min,
            seed: self.seed.unwrap_or(0),
            reduction: match self.loss_reduction {
                ReductionArg::Mean => Reduction::Mean,
                ReductionArg::Sum => Reduction::Sum,
            },
            ..TrainConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Input image (PGM or PNG, 8-bit).
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated alpha values, e.g. `1,5,10`. Overrides --alpha.
    #[arg(long)]
    pub alphas: String,
    /// Runs to execute in parallel. Output is identical for any value.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["spec", "preset"])))]
pub struct SynthArgs {
    /// Scene description file (`key = value` lines).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Built-in scene.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Segment the scene and score it against the ground truth.
    #[arg(long)]
    pub evaluate: bool,
    /// IoU a fault class needs to count as detected.
    #[arg(long, default_value_t = 0.3)]
    pub tau: f64,
    #[command(flatten)]
    pub train: TrainArgs,
}

/// Parses a comma-separated list of non-negative alphas.
pub fn parse_alphas(list: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("malformed --alphas list {list:?}"));
    let alphas = list
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<f64>>>()?;
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(CliError::Usage(format!(
            "--alphas values must be finite and >= 0, got {list:?}"
        )));
    }
    Ok(alphas)
}

/// Subdirectory used for one alpha of a sweep.
pub fn alpha_dir_name(alpha: f64) -> String {
    format!("alpha_{alpha}")
}

fn progress(quiet: bool) -> usize {
    if quiet {
        0
    } else {
        10
    }
}

fn cmd_segment(args: &SegmentArgs, quiet: bool) -> Result<ExitCode> {
    let opts = SegmentOptions {
        config: args.train.config()?,
        invert_gray: args.train.invert_gray,
        progress_every: progress(quiet),
    };
    let image = io::load_grayscale(&args.input)?;
    let outcome = segment_image(
        &image,
        "segment",
        vec![args.input.clone()],
        &args.out,
        &opts,
    )?;
    report_outcome(&outcome, quiet);
    Ok(if outcome.numeric_failure() {
        ExitCode::Numeric
    } else {
        ExitCode::Success
    })
}

fn report_outcome(o: &SegmentOutcome, quiet: bool) {
    if quiet {
        return;
    }
    let r = &o.result;
    eprintln!(
        "{}: {} after {} iterations, {} clusters",
        o.manifest.output_dir.display(),
        r.stop_reason,
        r.iterations_run,
        r.unique_clusters_final
    );
}

fn cmd_sweep(args: &SweepArgs, quiet: bool) -> Result<ExitCode> {
    let alphas = parse_alphas(&args.alphas)?;
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let base = args.train.config()?;
    let image = io::load_grayscale(&args.input)?;
    ensure_dir(&args.out)?;

    let run_one = |alpha: f64| -> Result<SegmentOutcome> {
        let opts = SegmentOptions {
            config: TrainConfig {
                alpha,
                ..base.clone()
            },
            invert_gray: args.train.invert_gray,
            progress_every: progress(quiet),
        };
        let dir = args.out.join(alpha_dir_name(alpha));
        segment_image(&image, "sweep", vec![args.input.clone()], &dir, &opts)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} jobs: {e}", args.jobs)))?;
    let outcomes: Vec<Result<SegmentOutcome>> = pool.install(|| {
        use rayon::prelude::*;
        alphas.par_iter().map(|&a| run_one(a)).collect()
    });

    let mut csv = String::from("alpha,iteration,total\n");
    let mut code = ExitCode::Success;
    for (alpha, outcome) in alphas.iter().zip(&outcomes) {
        match outcome {
            Ok(o) => {
                report_outcome(o, quiet);
                for (i, l) in o.result.loss_history.iter().enumerate() {
                    let _ = writeln!(csv, "{alpha},{},{}", i + 1, l.total);
                }
                if o.numeric_failure() && code == ExitCode::Success {
                    code = ExitCode::Numeric;
                }
            }
            Err(e) => {
                eprintln!("error: alpha {alpha}: {e}");
                if code == ExitCode::Success {
                    code = e.exit_code();
                }
            }
        }
    }
    let path = args.out.join("sweep.csv");
    std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    Ok(code)
}

#[derive(Debug, Serialize)]
struct Metrics<'a> {
    tau: f64,
    stop_reason: String,
    unique_clusters_final: usize,
    classes: &'a [ClassDetection],
}

fn cmd_synth(args: &SynthArgs, quiet: bool) -> Result<ExitCode> {
    let spec = match (&args.spec, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let spec = scene_file::parse(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if let Some(seed) = args.train.seed {
                SceneSpec { seed, ..spec }
            } else {
                spec
            }
        }
        (None, Some(name)) => {
            SceneSpec::preset(name, args.train.seed.unwrap_or(0)).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown preset {name:?}; available: {}",
                    PRESETS.join(", ")
                ))
            })?
        }
        (None, None) => unreachable!("clap requires --spec or --preset"),
    };
    spec.validate()?;
    if !(args.tau > 0.0 && args.tau <= 1.0) {
        return Err(CliError::Usage(format!(
            "--tau must be in (0, 1], got {}",
            args.tau
        )));
    }
    let config = if args.evaluate {
        Some(args.train.config()?)
    } else {
        None
    };

    ensure_dir(&args.out)?;
    let (image, truth) = generate_scene(&spec)?;
    io::save_png(&image, &args.out.join("scene.png"))?;
    io::save_pgm(&image, &args.out.join("scene.pgm"))?;
    io::save_truth_pgm(&truth, &args.out.join("truth.pgm"))?;
    let spec_path = args.out.join("scene.txt");
    std::fs::write(&spec_path, scene_file::format(&spec))
        .map_err(|e| CliError::io(&spec_path, e))?;

    let Some(config) = config else {
        return Ok(ExitCode::Success);
    };
    let opts = SegmentOptions {
        config,
        invert_gray: args.train.invert_gray,
        progress_every: progress(quiet),
    };
    let outcome = segment_image(&image, "synth", vec![spec_path], &args.out, &opts)?;
    report_outcome(&outcome, quiet);
    let report = detection_report(&outcome.result.final_labels, &truth, args.tau)?;
    let metrics = Metrics {
        tau: args.tau,
        stop_reason: outcome.result.stop_reason.to_string(),
        unique_clusters_final: outcome.result.unique_clusters_final,
        classes: &report,
    };
    let path = args.out.join("metrics.json");
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    for d in &report {
        println!(
            "{:<12} best_iou={:.4} cluster={} detected={}",
            d.class.as_str(),
            d.score,
            d.cluster,
            d.detected
        );
    }
    Ok(if outcome.numeric_failure() {
        ExitCode::Numeric
    } else {
        ExitCode::Success
    })
}

pub fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Segment(a) => cmd_segment(a, cli.quiet),
        Command::Sweep(a) => cmd_sweep(a, cli.quiet),
        Command::Synth(a) => cmd_synth(a, cli.quiet),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::Usage as i32
            } else {
                0
            };
        }
    };
    match execute(&cli) {
        Ok(code) => code as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_lists() {
        assert_eq!(parse_alphas("1,5,10").unwrap(), vec![1.0, 5.0, 10.0]);
        assert_eq!(parse_alphas(" 0.5 ").unwrap(), vec![0.5]);
        for bad in ["1,,5", "", "a", "1,-2", "1,inf"] {
            assert!(
                matches!(parse_alphas(bad), Err(CliError::Usage(_))),
                "{bad}"
            );
        }
        assert_eq!(alpha_dir_name(5.0), "alpha_5");
        assert_eq!(alpha_dir_name(0.5), "alpha_0.5");
    }

    #[test]
    fn defaults_match_reference_configuration() {
        let cli =
            Cli::try_parse_from(["pvseg", "segment", "--input", "a.png", "--out", "o"]).unwrap();
        let Command::Segment(a) = cli.command else {
            panic!()
        };
        let c = a.train.config().unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!(
            (c.alpha, c.learning_rate, c.momentum, c.max_iterations),
            (5.0, 0.1, 0.9, 200)
        );
    }

    #[test]
    fn bad_flags() {
        assert!(Cli::try_parse_from(["pvseg", "segment", "--out", "o"]).is_err());
        assert!(Cli::try_parse_from(["pvseg", "synth", "--out", "o"]).is_err());
        let cli = Cli::try_parse_from([
            "pvseg", "segment", "--input", "a", "--out", "o", "--q-min", "30",
        ])
        .unwrap();
        let Command::Segment(a) = cli.command else {
            panic!()
        };
        assert!(matches!(a.train.config(), Err(CliError::Core(_))));
        assert_eq!(a.train.config().unwrap_err().exit_code(), ExitCode::Usage);
    }
}
