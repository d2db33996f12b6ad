use clap::{Parser, Subcommand};

use fsir_cli::commands::{
    cmd_cv, cmd_diagnose, cmd_fit, cmd_predict, cmd_simulate, CvArgs, DiagnoseArgs, FitArgs,
    PredictArgs, SimulateArgs,
};

/// Dimension reduction for curve-valued predictors: slice the response,
/// whiten the slice means on a truncated covariance, and read directions
/// off the eigenproblem.
#[derive(Parser)]
#[command(name = "fsir", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset plus a true-index sidecar
    Simulate(SimulateArgs),
    /// Estimate directions at a fixed truncation rank
    Fit(FitArgs),
    /// Choose the truncation rank by cross-validation
    Cv(CvArgs),
    /// Predict responses for new curves from a fit file
    Predict(PredictArgs),
    /// Conditioning diagnostics: truncation sweep, eigengaps, spectra
    Diagnose(DiagnoseArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
