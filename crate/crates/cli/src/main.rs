//! `superradiant`: steady states, trajectories, currents, fluctuations and
//! phase diagrams of a cavity ring coupled to two-level emitters.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, unreadable or
//! malformed config), 2 when the computation fails; the latter also writes
//! `{"error": <kind>, "message": <text>}` to stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{EvolveArgs, FluctArgs, ParamArgs, SteadyArgs, SweepArgs};

#[derive(Debug, Parser)]
#[command(name = "superradiant", version, about = "Mean-field superradiant photon currents in a cavity ring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    #[command(flatten)]
    params: ParamArgs,
    /// TOML configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the primary output here instead of stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form (or evolved) steady state with stability and currents, as JSON
    #[command(allow_negative_numbers = true)]
    Steady {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        steady: SteadyArgs,
    },
    /// Mean-field trajectory as CSV
    #[command(allow_negative_numbers = true)]
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        evolve: EvolveArgs,
    },
    /// Current report of the steady state, as JSON
    #[command(allow_negative_numbers = true)]
    Currents {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        steady: SteadyArgs,
    },
    /// Steady photon-number fluctuations per cavity, as CSV
    #[command(allow_negative_numbers = true)]
    Fluct {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fluct: FluctArgs,
    },
    /// Observable over a 1-D or 2-D parameter grid, as CSV or JSON
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Critical coupling and, for three cavities, the critical detuning at --g
    #[command(allow_negative_numbers = true)]
    Critical {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Numerical(e)) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}
