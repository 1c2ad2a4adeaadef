use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use relay_harq::cli::run_file;

/// Outage analysis, ARQ budget allocation and packet simulation for
/// multi-hop relay links.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Experiment kind; overrides `command` in the file. One of pdp-sweep,
    /// optimize, local-min-check, simulate, delay-profile, list-size.
    command: Option<String>,
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; a JSON sidecar is written next to it. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation threads. Does not change the results.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run_file(&args.config, args.command.as_deref(), args.seed, args.workers, args.out.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
