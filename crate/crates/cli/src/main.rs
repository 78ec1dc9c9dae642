//! `crowdcal`: batch commands over depth frames, trajectories and model fits.
//!
//! Exit codes: 0 success, 1 input error, 2 degenerate data under `--strict`.

mod commands;
mod config;
mod error;
mod run;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::run::Run;

#[derive(Parser)]
#[command(name = "crowdcal", version, about = "Pedestrian tracking with depth sensors and Social Force calibration")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of every random stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Fail with exit code 2 when the data were degenerate.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate sensor poses from reference-point matches.
    CalibrateSensors {
        /// Lines of `sensor_id x_w y_w z_w x_c y_c z_c`.
        matches: PathBuf,
    },
    /// Detect and track people in per-sensor depth frames.
    Track {
        /// Directory of `.dpf` depth frames.
        frames: PathBuf,
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
    },
    /// Join trajectory fragments of neighbouring sensors.
    Stitch {
        /// Per-sensor trajectory files, in corridor order.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// `id_a,id_b` pairs known to belong together; enables the TPR.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Compare tracked trajectories with ground truth (MOTP, PDR).
    Evaluate { auto: PathBuf, truth: PathBuf },
    /// Calibrate Social Force variants on recorded trajectories.
    Fit {
        trajectories: PathBuf,
        /// A, B, C, a comma list, or all.
        #[arg(long, default_value = "all")]
        variant: String,
        /// Share of trajectories used for calibration.
        #[arg(long)]
        split: Option<f64>,
    },
    /// Compare walking times of fitted models with the measured ones.
    Validate {
        trajectories: PathBuf,
        /// Fit result files written by `fit`.
        #[arg(long = "fit", required = true)]
        fits: Vec<PathBuf>,
    },
    /// Generate a synthetic corridor (depth frames and truth) or seam dataset.
    Synth,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CalibrateSensors { .. } => "calibrate-sensors",
            Command::Track { .. } => "track",
            Command::Stitch { .. } => "stitch",
            Command::Evaluate { .. } => "evaluate",
            Command::Fit { .. } => "fit",
            Command::Validate { .. } => "validate",
            Command::Synth => "synth",
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Command::Fit { split: Some(r), .. } = &cli.command {
        config.set("objective.split_ratio", r.to_string());
    }
    let run = Run::new(cli.command.name(), config, cli.seed, cli.strict, cli.out.clone());
    match &cli.command {
        Command::CalibrateSensors { matches } => {
            commands::calibrate::calibrate_sensors(&run, matches)?;
        }
        Command::Track { frames, background, calibration } => {
            commands::track::track(&run, frames, background, calibration)?;
        }
        Command::Stitch { files, pairs } => {
            commands::stitch::stitch(&run, files, pairs.as_deref())?;
        }
        Command::Evaluate { auto, truth } => {
            commands::evaluate::evaluate(&run, auto, truth)?;
        }
        Command::Fit { trajectories, variant, .. } => {
            let variants = commands::fit::parse_variants(variant)?;
            commands::fit::fit(&run, trajectories, &variants)?;
        }
        Command::Validate { trajectories, fits } => {
            commands::validate::validate(&run, trajectories, fits)?;
        }
        Command::Synth => {
            commands::synth::synth(&run)?;
        }
    }
    run.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap's own code for usage errors is 2, which is reserved here
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Input(_) => eprintln!("error: {e}"),
                CliError::Degenerate(_) => eprintln!("strict: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
