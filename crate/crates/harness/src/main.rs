use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rgbdtrack::bench::benchmark;
use rgbdtrack::config::ScenarioConfig;
use rgbdtrack::scenario::{run_scenario, write_artifacts, Lane, RunOptions};
use rgbdtrack_core::correction::{fit_correction, parse_sample_csv};
use rgbdtrack_core::fusion::CiMode;
use rgbdtrack_core::sim::DisparityModel;

/// Multi-camera RGBD tracking toolkit: simulate, correct, filter, track,
/// fuse — and measure.
#[derive(Parser)]
#[command(name = "rgbdtrack", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full scenario and write trajectory CSVs plus a JSON report.
    Run {
        /// Scenario configuration file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for trajectory.csv, ground_truth.csv, report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fusion weighting mode for the exported fused trajectory.
        #[arg(long, value_enum, default_value = "adaptive")]
        mode: ModeArg,
        /// Skip the per-sensor depth correction stage.
        #[arg(long)]
        no_correction: bool,
        /// Which per-camera estimator fills the camera rows of the CSV.
        #[arg(long, value_enum, default_value = "rf")]
        filter: FilterArg,
    },
    /// Benchmark the per-pixel stages across thread counts.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated thread counts, e.g. 1,2,4,8.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        threads: Vec<usize>,
        /// Frames per timed run.
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Timed repetitions per thread count (minimum 5).
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Fit a depth-correction model from measured/reference sample pairs.
    FitCorrection {
        /// CSV of z_measured,z_reference rows.
        #[arg(long)]
        samples: PathBuf,
        /// Output path for the fitted model (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Polynomial degree of the offset model.
        #[arg(long, default_value_t = 8)]
        degree: usize,
        /// Disparity offset of the sensor, 1/8-pixel units.
        #[arg(long, default_value_t = 1090.0)]
        doff: f64,
        /// Stereo baseline, meters.
        #[arg(long, default_value_t = 0.075)]
        baseline: f64,
        /// IR focal length, pixels.
        #[arg(long, default_value_t = 580.0)]
        ir_focal: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Naive,
    Fast,
    AdaptivePk,
    Adaptive,
}

impl From<ModeArg> for CiMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Naive => CiMode::Naive,
            ModeArg::Fast => CiMode::Fast,
            ModeArg::AdaptivePk => CiMode::AdaptivePk,
            ModeArg::Adaptive => CiMode::AdaptivePkz,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Raw,
    Kf,
    Rf,
}

impl From<FilterArg> for Lane {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Raw => Lane::Raw,
            FilterArg::Kf => Lane::Kalman,
            FilterArg::Rf => Lane::Robust,
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    ScenarioConfig::from_json(&text).context("invalid scenario config")
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            mode,
            no_correction,
            filter,
        } => {
            let config = load_config(&config)?;
            let options = RunOptions {
                csv_lane: filter.into(),
                csv_mode: mode.into(),
                disable_correction: no_correction,
            };
            let output = run_scenario(&config, &options)?;
            print!("{}", output.report.summary());
            if let Some(dir) = out {
                write_artifacts(&output, &dir)?;
                println!("artifacts written to {}", dir.display());
            }
        }
        Command::Bench {
            config,
            threads,
            frames,
            runs,
        } => {
            if threads.is_empty() {
                bail!("need at least one thread count");
            }
            let config = load_config(&config)?;
            let report = benchmark(&config, &threads, frames, runs)?;
            print!("{}", report.summary());
        }
        Command::FitCorrection {
            samples,
            out,
            degree,
            doff,
            baseline,
            ir_focal,
        } => {
            let text = std::fs::read_to_string(&samples)
                .with_context(|| format!("reading samples {}", samples.display()))?;
            let pairs = parse_sample_csv(&text)?;
            let disparity = DisparityModel {
                doff,
                baseline,
                ir_focal,
            };
            let model = fit_correction(&pairs, &disparity, degree)?;
            println!(
                "fitted degree-{degree} model from {} samples, residual RMS {:.4} m",
                pairs.len(),
                model.residual_rms()
            );
            std::fs::write(&out, serde_json::to_string_pretty(&model)?)?;
            println!("model written to {}", out.display());
        }
    }
    Ok(())
}
