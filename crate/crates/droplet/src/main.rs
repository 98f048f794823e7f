//! Command-line entry point: run a scenario file end to end.
//!
//! Exit codes: 0 all certificates pass, 1 a certificate failed,
//! 2 configuration error, 3 runtime or solver error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use droplet::error::Error;
use droplet::scenario::{run_scenario, RunOptions};

#[derive(Parser)]
#[command(name = "droplet", version, about = "Rate-independent droplet evolution simulator")]
struct Cli {
    /// Scenario configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the scenario's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mask snapshot stride in steps; 0 disables snapshots.
    #[arg(long)]
    snapshots: Option<usize>,
    /// Comma-separated certificate names to evaluate (default: scenario list).
    #[arg(long, value_delimiter = ',')]
    verify: Option<Vec<String>>,
    /// Suppress per-certificate output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let options = RunOptions {
        out_dir: cli.out,
        snapshot_stride: cli.snapshots,
        certificates: cli.verify,
        quiet: cli.quiet,
    };
    match run_scenario(&cli.config, &options) {
        Ok(outcome) => {
            if !cli.quiet {
                println!(
                    "scenario `{}`: {} steps, artifacts in {}",
                    outcome.name,
                    outcome.trace.steps.len(),
                    outcome.out_dir.display()
                );
            }
            if outcome.all_passed() {
                ExitCode::from(0)
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
