use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlmc_cli::{execute, Command, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "mlmc", version, about = "Multilevel Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `run.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Adaptive multilevel estimates for each tolerance.
    Run,
    /// Fixed-sample per-level study and fitted decay rates.
    Rates,
    /// Multilevel against standard Monte Carlo cost.
    Compare,
    /// Value, delta and vega.
    Greeks,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let Some(path) = cli.config else {
        eprintln!("configuration error: --config is required");
        return ExitCode::from(1);
    };
    let mut cfg = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    let dir = cli.out.or_else(|| cfg.run.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let command = match cli.command {
        Cmd::Run => Command::Run,
        Cmd::Rates => Command::Rates,
        Cmd::Compare => Command::Compare,
        Cmd::Greeks => Command::Greeks,
    };
    match execute(command, &cfg, &dir, cli.threads) {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
