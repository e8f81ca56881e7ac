//! `lrtrial`: sequential likelihood-ratio trials from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. `monitor`
//! additionally exits 10 / 11 / 12 when the trial stops high / low / at the
//! maximum size, and 3 when input ends before any stop.

mod commands;
mod monitor;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use lrtrial_core::sim::DEFAULT_SEED;
use lrtrial_core::{DesignParams, TrialDesign};

#[derive(Debug, Parser)]
#[command(
    name = "lrtrial",
    version,
    about = "Sequential likelihood-ratio trial design, simulation and monitoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample-size bounds and stopping boundaries for a design.
    Design {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Monte Carlo operating characteristics (outcome table).
    Simulate(commands::SimulateArgs),
    /// Mean sample size at termination over a grid of true effects, as CSV.
    Sweep(commands::SweepArgs),
    /// Likelihood ratio from a reported result.
    Convert(ConvertArgs),
    /// Reads one observation per line from stdin and applies the stopping rule.
    Monitor {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Runs the session HTTP API.
    Serve(serve::ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Minimum clinically significant effect, in standardized units.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
    /// Critical value used to calibrate the sample-size bounds.
    #[arg(long, default_value_t = lrtrial_core::design::DEFAULT_Z_CRIT)]
    pub z_crit: f64,
    #[arg(long, default_value_t = lrtrial_core::design::DEFAULT_LR_UPPER)]
    pub lr_upper: f64,
    /// Defaults to 1 / lr_upper.
    #[arg(long)]
    pub lr_lower: Option<f64>,
}

impl DesignArgs {
    pub fn build(&self) -> Result<TrialDesign, String> {
        DesignParams::new(self.delta)
            .z_crit(self.z_crit)
            .thresholds(self.lr_upper, self.lr_lower)
            .build()
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["z", "estimate"])))]
pub struct ConvertArgs {
    /// Observed standardized effect.
    #[arg(long, allow_negative_numbers = true, requires = "delta_std", conflicts_with_all = ["estimate", "se", "delta"])]
    pub z: Option<f64>,
    /// Minimum clinically significant effect in the same standardized units as --z.
    #[arg(long, allow_negative_numbers = true, requires = "z")]
    pub delta_std: Option<f64>,
    /// Point estimate of the effect.
    #[arg(long, allow_negative_numbers = true, requires_all = ["se", "delta"])]
    pub estimate: Option<f64>,
    /// Standard error of the estimate.
    #[arg(long, requires = "estimate")]
    pub se: Option<f64>,
    /// Minimum clinically significant effect in the units of --estimate.
    #[arg(long, allow_negative_numbers = true, requires = "estimate")]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Master seed; every run with the same flags prints the same output.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

/// Where a subcommand failed: bad input or a runtime problem.
pub enum Failure {
    Usage(String),
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design { design, format } => commands::design(&design, format),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Convert(args) => commands::convert(&args),
        Command::Monitor { design, format } => monitor::run(&design, format),
        Command::Serve(args) => serve::run(args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => Cli::command().error(ErrorKind::ValueValidation, msg).exit(),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

pub fn write_output(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("writing {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
