mod analyze;
mod commands;

use clap::{Parser, Subcommand};
use focal_calib::CalibError;
use std::process::ExitCode;

/// Seed used by stochastic scans when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Parser)]
#[command(name = "focalcal", version, about = "Focal temperature scaling and focal calibration analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select calibrator parameters on a validation logits file.
    Fit(commands::FitArgs),
    /// Write calibrated probabilities for a logits file.
    Apply(commands::ApplyArgs),
    /// Report accuracy, NLL and ECE, with a reliability table.
    Eval(commands::EvalArgs),
    /// Run a numerical study and write its CSV/JSON artifacts.
    Analyze(analyze::AnalyzeArgs),
}

fn exit_code(err: &CalibError) -> u8 {
    match err {
        CalibError::Parameter(_) => 1,
        CalibError::Verification(_) => 3,
        CalibError::Ingestion(_) | CalibError::Domain(_) | CalibError::Numeric(_) | CalibError::Io(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Apply(args) => commands::apply(args),
        Command::Eval(args) => commands::eval(args),
        Command::Analyze(args) => analyze::run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
