//! Command-line orchestration of the collection-area pipeline.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 non-convergence.

mod commands;
mod config;
mod manifest;
mod tables;

use clap::{Parser, Subcommand};
use commands::{CliError, Ctx};
use config::RunConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "wtstrike",
    version,
    about = "Estimate lightning collection areas for wind turbines from LLS stroke data"
)]
struct Args {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker thread count; defaults to available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Season override for fit/sweep/turbines.
    #[arg(long, global = true, value_parser = ["all", "warm", "cold"])]
    season: Option<String>,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stroke dataset with a truth sidecar.
    Synth,
    /// Match strokes to operational turbines and write the pair run file.
    Match,
    /// Iteratively fit the count model to the matched pairs.
    Fit,
    /// Fit each height category and tabulate radii and regressions.
    Sweep,
    /// Per-turbine proximity statistics and attraction-radius CDFs.
    Turbines,
    /// Cold-vs-warm season regional grid.
    Seasonal,
}

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            // clap's default exit code for usage errors is 2; this pipeline
            // reserves 2 for data errors, so remap usage problems to 1.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            // --help / --version
            print!("{e}");
            std::process::exit(0);
        }
    };

    match run(args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

fn run(args: Args) -> Result<(), CliError> {
    let config_path = args
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config(anyhow::anyhow!("--config is required")))?;
    let mut config = RunConfig::load(config_path).map_err(CliError::Config)?;
    if let Some(dir) = &args.output {
        config.output.directory = dir.clone();
    }

    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Config(anyhow::anyhow!("cannot build worker pool: {e}")))?;

    let ctx = Ctx {
        out_dir: config.output.directory.clone(),
        config,
        season_override: args.season,
        workers,
        verbose: args.verbose,
    };

    match args.command {
        Command::Synth => commands::cmd_synth(&ctx),
        Command::Match => commands::cmd_match(&ctx),
        Command::Fit => commands::cmd_fit(&ctx),
        Command::Sweep => commands::cmd_sweep(&ctx),
        Command::Turbines => commands::cmd_turbines(&ctx),
        Command::Seasonal => commands::cmd_seasonal(&ctx),
    }
}
