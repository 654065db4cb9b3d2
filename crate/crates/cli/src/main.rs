use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mhdsim_cli::run::EXIT_CONFIG;
use mhdsim_cli::{load_config, run, Mode, Overrides};

/// Plasma-vacuum interface simulator.
#[derive(Parser, Debug)]
#[command(name = "mhdsim", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// direct, picard, linear or convergence.
    #[arg(long)]
    mode: Option<Mode>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed of the random scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(threads) = std::env::var("MHDSIM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("mhdsim: cannot configure {threads} threads: {e}");
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("mhdsim: cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let overrides = Overrides { mode: args.mode, output: args.output, seed: args.seed, max_steps: args.max_steps };
    let config = match load_config(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mhdsim: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let summary = run(&config);
    match &summary.message {
        Some(msg) => eprintln!("mhdsim: {}: {msg}", summary.status),
        None => eprintln!("mhdsim: {} after {} steps, t = {}", summary.status, summary.steps, summary.t_final),
    }
    ExitCode::from(summary.exit_code as u8)
}
