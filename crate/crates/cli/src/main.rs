//! `aflab` - scenario-driven front end for the backwards Ricci flow
//! laboratory. Commands read a JSON scenario, write CSV/JSON artifacts for
//! offline plotting, and exit 0 on success, 2 on invalid input, 3 on a
//! violated assertion, 4 on numeric termination.

use aflab_core::scenario::{error_exit_code, run_command, RunContext, Scenario};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "aflab", version, about = "Backwards Ricci flow laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for all randomness (scenario seed is the fallback).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool size (falls back to AFLAB_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Origin, partial fixed points, and the interior fixed point with
    /// residuals and region memberships.
    FixedPoints(CommonArgs),
    /// Linearization spectra at the interior and partial fixed points.
    Spectrum(CommonArgs),
    /// Rank-one trajectory in the `u` or `tau` clock.
    Flow(CommonArgs),
    /// Rank-r fibre-metric trajectory with its structural monitors.
    TorusFlow(CommonArgs),
    /// Trace a distinguished ancient solution or classify a backward limit.
    Shoot(CommonArgs),
    /// Curvature, type-I surrogate, and collapse diagnostics along a run.
    Diagnose(CommonArgs),
    /// Phase-portrait grid with region and basin tags.
    Portrait(CommonArgs),
    /// Run the verification suite.
    Verify(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::FixedPoints(_) => "fixed-points",
            Command::Spectrum(_) => "spectrum",
            Command::Flow(_) => "flow",
            Command::TorusFlow(_) => "torus-flow",
            Command::Shoot(_) => "shoot",
            Command::Diagnose(_) => "diagnose",
            Command::Portrait(_) => "portrait",
            Command::Verify(_) => "verify",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::FixedPoints(a)
            | Command::Spectrum(a)
            | Command::Flow(a)
            | Command::TorusFlow(a)
            | Command::Shoot(a)
            | Command::Diagnose(a)
            | Command::Portrait(a)
            | Command::Verify(a) => a,
        }
    }
}

fn env_threads() -> Option<usize> {
    std::env::var("AFLAB_THREADS").ok()?.parse().ok()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.args();

    let scenario = match Scenario::from_path(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("aflab: invalid scenario: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = RunContext {
        out_dir: args.out.clone(),
        seed: args.seed.or(scenario.seed).unwrap_or(0),
        threads: args.threads.or_else(env_threads),
    };

    match run_command(cli.command.name(), &scenario, &ctx) {
        Ok(outcome) => {
            for file in &outcome.files {
                eprintln!("aflab: wrote {}", file.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("aflab: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
