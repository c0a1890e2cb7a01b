//! `postprice`: solve for optimal posted prices, simulate the mechanism,
//! sweep price bounds and verify exported pricing functions.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "postprice", version, about = "Optimal posted-price mechanisms for online allocation with convex supply cost")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the optimal ratio and threshold, and export the pricing function.
    Solve(Common),
    /// Simulate the mechanism on an instance and check the certificate.
    Run(Common),
    /// Solve along a grid of p_low or p_high values.
    Sweep(Common),
    /// Check an exported pricing function against the sufficient conditions.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Pricing-function JSON produced by `solve`.
        #[arg(long)]
        pricing: PathBuf,
        /// Ratio to verify; defaults to the ratio stored in the pricing file.
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Request size for generated instances.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result: Result<(), CliError> = match &cli.command {
        Command::Solve(c) => commands::solve(c),
        Command::Run(c) => commands::run(c),
        Command::Sweep(c) => commands::sweep(c),
        Command::Verify { common, pricing, alpha } => commands::verify(common, pricing, *alpha),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
