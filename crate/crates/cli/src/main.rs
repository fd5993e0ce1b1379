mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{analyze, qm_fit, repulsion, scaling, scan, solve, stability, traj};
use error::{CliError, Result};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nreference geometry: hole diameter 1.14 mm, pitch 1.64 mm, 10x10 lattice, rf-ground gap 1 mm, top plate 15 mm",
    "\nreference fit: r1 = 3.1 mm, alpha = -4.0, z1 = 19 mm",
    "\nreference drive: V = 300 V, Omega/2pi = 7.7 MHz, depth 0.3 eV (88Sr+)",
    "\nreference macroion: Q/m = 1.9e-9 e/amu",
);

#[derive(Debug, Parser)]
#[command(name = "latticetrap", version, long_version = LONG_VERSION, about = "Planar rf lattice trap simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the normalized rf and top-plate potentials.
    Solve(solve::SolveArgs),
    /// Fit every site of a solved field and report depth and secular frequencies.
    Analyze(analyze::AnalyzeArgs),
    /// Integrate one ion trajectory and extract its secular frequencies.
    Traj(traj::TrajArgs),
    /// Mathieu stability map and boundary.
    Stability(stability::StabilityArgs),
    /// Two-ion displacement against drive frequency.
    Repulsion(repulsion::RepulsionArgs),
    /// Coupling rate under lattice shrinkage at fixed q.
    Scaling(scaling::ScalingArgs),
    /// Fit Q/m to measured axial frequencies.
    QmFit(qm_fit::QmFitArgs),
    /// One-variable sweep of a target quantity, as CSV.
    Scan(scan::ScanArgs),
}

/// Cap rayon's pool from `LATTICETRAP_THREADS`.
fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("LATTICETRAP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("LATTICETRAP_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot size the thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Solve(a) => solve::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Traj(a) => traj::run(a),
        Command::Stability(a) => stability::run(a),
        Command::Repulsion(a) => repulsion::run(a),
        Command::Scaling(a) => scaling::run(a),
        Command::QmFit(a) => qm_fit::run(a),
        Command::Scan(a) => scan::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors count as config errors
            return ExitCode::from(if e.use_stderr() { error::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
