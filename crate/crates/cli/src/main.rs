//! `sdd` drives the drift-diffusion toolkit from the command line.  All
//! numeric behavior lives in `sdd-core`; this binary only resolves config,
//! dispatches, and writes artifacts.
//!
//! Exit codes: 0 success, 1 config or input error, 2 numerical failure
//! (non-convergence, undetermined classification, unstable step).

mod config;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{gather, resolve};
use runs::RunResult;

#[derive(Parser)]
#[command(name = "sdd", version, about = "Sublinear drift-diffusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; `--set` entries override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving manifest.json and all CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a single config key, e.g. `--set mass=2.0`.  Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the variational (minimizing-movement) scheme and record the
    /// quantile trajectory plus diagnostics.
    Simulate(Common),
    /// Print the steady-state summary and write the minimizer profile.
    Steady(Common),
    /// Print the critical mass for the configured law and potential.
    CriticalMass(Common),
    /// Run the variational scheme against the finite-volume reference over a
    /// resolution ladder and tabulate the final-time L1 gaps.
    Compare(Common),
    /// Follow a single characteristic of the drift field.
    Flow(Common),
    /// Classify a measure from disk: minimizer, stationary but not
    /// minimizing, or not stationary.
    CheckStationary(Common),
}

fn dispatch(cmd: &Command) -> RunResult {
    let (common, run): (&Common, fn(&config::RunConfig, &std::path::Path) -> RunResult) = match cmd
    {
        Command::Simulate(c) => (c, runs::run_simulate),
        Command::Steady(c) => (c, runs::run_steady),
        Command::CriticalMass(c) => (c, runs::run_critical_mass),
        Command::Compare(c) => (c, runs::run_compare),
        Command::Flow(c) => (c, runs::run_flow),
        Command::CheckStationary(c) => (c, runs::run_check_stationary),
    };
    let map = gather(common.config.as_ref(), &common.set)?;
    let cfg = resolve(&map)?;
    run(&cfg, &common.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Let clap print its rendered message (help/version go to stdout
            // with success, usage errors to stderr), but keep usage errors on
            // this tool's config exit code.
            let is_help = e.use_stderr();
            e.print().expect("clap error rendering failed");
            return if is_help { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
