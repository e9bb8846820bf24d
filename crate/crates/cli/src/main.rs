mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "gnse", version, about = "Fractional Navier-Stokes with randomized rough data")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the master seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Restrict to one ensemble member (default: all members).
    #[arg(long, global = true)]
    pub member: Option<u64>,
    /// Parallel ensemble workers.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory; overrides GNSE_WORKDIR and the configured workdir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// State checkpoint to resume `simulate` from.
    #[arg(long, global = true)]
    pub resume: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the exponent table, case and decay predictions of a regime.
    #[command(allow_negative_numbers = true)]
    Params { d: usize, alpha: f64, s: f64 },
    /// Write the randomized initial datum of each member.
    Randomize,
    /// Solve the mild formulation on [0, tau] by Picard iteration.
    Picard {
        /// Initial-datum checkpoint (default: <out>/u0_m<member>.gnse).
        #[arg(long)]
        ic: Option<PathBuf>,
    },
    /// Evolve from the Picard solution to t_max, writing ledger, series and checkpoints.
    Simulate {
        #[arg(long)]
        ic: Option<PathBuf>,
        /// Picard trajectory (default: <out>/picard_m<member>.gnsetraj).
        #[arg(long)]
        picard: Option<PathBuf>,
        /// Stop after this many steps (leaves a resumable state checkpoint).
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Fit decay slopes from series (and ledger) CSVs.
    DecayFit {
        /// Series CSVs (default: every series_m*.csv in the output directory).
        series: Vec<PathBuf>,
    },
    /// Run the quick invariant suite.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
