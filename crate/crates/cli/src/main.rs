//! Factor mining pipeline driver: synthesize or ingest a panel, mine
//! factors, evaluate them, backtest pools, and stitch the report.

mod config;
mod pipeline;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alphamine_core::Result;

use config::RunConfig;
use pipeline::{MineMethod, PoolChoice};

#[derive(Debug, Parser)]
#[command(name = "alphamine", version, about = "Alpha factor mining pipeline")]
struct Cli {
    /// Config file; defaults to ./alphamine.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Thread count for parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic panel CSV.
    Synth,
    /// Mine factors and write manifests plus model files.
    Mine {
        #[arg(long, value_enum, default_value = "both")]
        method: MineMethod,
    },
    /// Score mined pools: IC and diversity table plus cluster plot.
    Eval,
    /// Simulate the long-hedge strategy for the chosen pools.
    Backtest {
        #[arg(long, value_enum, default_value = "all")]
        pool: PoolChoice,
    },
    /// Combine evaluation and backtest outputs into one markdown report.
    Report,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let default_path = PathBuf::from("alphamine.toml");
            if default_path.exists() {
                RunConfig::load(&default_path)?
            } else {
                RunConfig::default()
            }
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(workers) = cli.workers {
        cfg.workers = Some(workers);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if let Some(workers) = cfg.workers {
        // a second invocation in-process would fail; the pool is global
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg),
        Command::Mine { method } => pipeline::cmd_mine(&cfg, method),
        Command::Eval => pipeline::cmd_eval(&cfg),
        Command::Backtest { pool } => pipeline::cmd_backtest(&cfg, pool),
        Command::Report => pipeline::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if err.use_stderr() => {
            eprint!("{err}");
            return ExitCode::from(1);
        }
        Err(err) => {
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user() { 1 } else { 2 })
        }
    }
}
