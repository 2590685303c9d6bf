//! `pact` — principal–agent contract toolkit.
//!
//! Subcommands cover the full pipeline: coefficient tables (`riccati`),
//! closed-loop Monte Carlo (`simulate`), multiplier sweeps (`sweep`),
//! participation calibration (`calibrate`), the effort-field solver
//! (`burgers`), and a self-check suite (`check`).
//!
//! Exit codes: 0 success; 1 configuration or input error; 2 numerical
//! blow-up; 3 infeasible calibration target. `check` exits with the number
//! of failed groups (capped at 125).

mod check;
mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::errors::Failure;

#[derive(Parser)]
#[command(
    name = "pact",
    about = "Linear-quadratic principal-agent contract toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides the configured one).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Size of the worker thread pool (default: all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Use the reduced path counts configured for quick runs.
    #[arg(long)]
    quick: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the feedback-coefficient system and write the table as CSV.
    Riccati(Common),
    /// Estimate both parties' costs by closed-loop Monte Carlo.
    Simulate(Common),
    /// Trace both cost curves over a grid of contract multipliers.
    Sweep(Common),
    /// Calibrate the multiplier to the participation threshold and compare
    /// against the zero-coupling contract.
    Calibrate(Common),
    /// Solve the effort field induced by a cash-flow schedule.
    Burgers(Common),
    /// Run the self-check suite against the configured model.
    Check(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Riccati(c)
            | Command::Simulate(c)
            | Command::Sweep(c)
            | Command::Calibrate(c)
            | Command::Burgers(c)
            | Command::Check(c) => c,
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let common = cli.command.common();
    let cfg = RunConfig::load(&common.config).map_err(Failure::Config)?;

    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot size the thread pool: {e}")))?;
    }

    let out_dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    match &cli.command {
        Command::Riccati(_) => commands::cmd_riccati(&cfg, &out_dir)?,
        Command::Simulate(c) => commands::cmd_simulate(&cfg, &out_dir, c.quick)?,
        Command::Sweep(c) => commands::cmd_sweep(&cfg, &out_dir, c.quick)?,
        Command::Calibrate(c) => commands::cmd_calibrate(&cfg, &out_dir, c.quick)?,
        Command::Burgers(_) => commands::cmd_burgers(&cfg, &out_dir)?,
        Command::Check(_) => return Ok(check::run_checks(&cfg)),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
