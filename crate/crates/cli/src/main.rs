#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Parser, Subcommand};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod commands;
mod output;

use output::Format;

#[derive(Parser, Debug)]
#[command(
    name = "tcsim",
    version,
    about = "Two transmons with a tunable coupler: couplings, gate simulation and calibration"
)]
struct Cli {
    /// Device TOML file (defaults to the bundled device).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "TCSIM_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Device description and derived parameters.
    Device {
        #[command(subcommand)]
        action: DeviceAction,
    },
    /// Parameter sweeps.
    Sweep {
        #[command(subcommand)]
        action: SweepAction,
    },
    /// Population map over q2 modulation amplitude and pulse duration.
    Chevron(commands::ChevronArgs),
    /// Calibrate a gate and write its GateSpec.
    Calibrate(commands::CalibrateArgs),
    /// Process tomography of a GateSpec.
    Tomo(commands::TomoArgs),
    /// Flux crosstalk compensation.
    Flux {
        #[command(subcommand)]
        action: FluxAction,
    },
    /// Flux-line transfer function.
    Transfer {
        #[command(subcommand)]
        action: TransferAction,
    },
}

#[derive(Subcommand, Debug)]
enum DeviceAction {
    Show,
}

#[derive(Subcommand, Debug)]
enum SweepAction {
    /// Static effective couplings versus coupler flux.
    Coupling(commands::SweepArgs),
}

#[derive(Subcommand, Debug)]
enum FluxAction {
    /// Invert a crosstalk matrix and compute source settings for a target.
    Invert(commands::FluxArgs),
}

#[derive(Subcommand, Debug)]
enum TransferAction {
    /// Achieved and predistorted amplitudes at a modulation frequency.
    Apply(commands::TransferArgs),
}

#[derive(Debug)]
pub struct CliError {
    stage: String,
    message: String,
}

impl CliError {
    pub fn new(stage: &str, message: impl Into<String>) -> Self {
        CliError {
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub fn io(stage: &str, path: &Path, e: std::io::Error) -> Self {
        Self::new(stage, format!("{}: {e}", path.display()))
    }

    pub fn core(stage: &str, e: tcsim_core::Error) -> Self {
        Self::new(stage, e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = Common {
        config: cli.config,
        out_dir: cli.out_dir,
        seed: cli.seed,
        format: cli.format,
    };
    let result = match cli.command {
        Command::Device {
            action: DeviceAction::Show,
        } => commands::device_show(&common),
        Command::Sweep {
            action: SweepAction::Coupling(a),
        } => commands::sweep_coupling(&common, &a),
        Command::Chevron(a) => commands::chevron(&common, &a),
        Command::Calibrate(a) => commands::calibrate(&common, &a),
        Command::Tomo(a) => commands::tomo(&common, &a),
        Command::Flux {
            action: FluxAction::Invert(a),
        } => commands::flux_invert(&common, &a),
        Command::Transfer {
            action: TransferAction::Apply(a),
        } => commands::transfer_apply(&common, &a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
