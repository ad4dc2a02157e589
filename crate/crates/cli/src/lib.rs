//! Batch experiment runner: reads an experiment file, runs pricing, Greek, rate and
//! complexity studies and writes CSV tables.
//!
//! | command   | files                                           |
//! |-----------|-------------------------------------------------|
//! | `run`     | `levels.csv`, `summary.csv`                     |
//! | `rates`   | `rates.csv`, `rate_fit.csv`                     |
//! | `compare` | `compare.csv` (plus `levels.csv`, `summary.csv`)|
//! | `greeks`  | `greeks.csv`                                    |

pub mod config;
pub mod output;

use std::path::Path;

use mlmc_core::{
    fit_rates_between, rate_study, run_mlmc, run_standard_mc, DriverError, LevelSampler, MlmcConfig, MlmcResult,
    Quantity, RateFit, StandardMcConfig,
};
use thiserror::Error;

pub use config::ExperimentConfig;
use output::*;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Runtime(#[from] DriverError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) | Self::Io(_) => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Rates,
    Compare,
    Greeks,
}

fn mlmc_config(cfg: &ExperimentConfig, eps: f64) -> MlmcConfig {
    let r = &cfg.run;
    MlmcConfig {
        eps,
        initial_samples: r.initial_samples,
        min_level: r.min_level,
        max_level: r.max_level,
        variance_fraction: r.variance_fraction,
        alpha: r.alpha,
        seed: r.seed,
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    // a stale marker from an earlier aborted run would mislabel fresh output
    let _ = std::fs::remove_file(dir.join(INCOMPLETE_MARKER));
    Ok(())
}

/// Runs `body`; on failure the outputs written so far are flagged as incomplete.
fn guarded<T>(dir: &Path, body: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
    body().inspect_err(|e| mark_incomplete(dir, &e.to_string()))
}

fn run_eps_list(
    cfg: &ExperimentConfig,
    sampler: &dyn LevelSampler,
    dir: &Path,
    mut each: impl FnMut(&MlmcResult) -> Result<(), CliError>,
) -> Result<Vec<MlmcResult>, CliError> {
    let mut levels = format!("{LEVELS_HEADER}\n");
    let mut summary = format!("{SUMMARY_HEADER}\n");
    let mut results = Vec::new();
    for &eps in &cfg.run.eps {
        let r = run_mlmc(sampler, &mlmc_config(cfg, eps))?;
        if !r.converged {
            log::warn!("eps = {eps}: stopped at the maximum level before the bias test passed");
        }
        levels_rows(&mut levels, &r);
        summary_row(&mut summary, &r);
        // rewritten after every tolerance so an abort leaves the finished rows behind
        write(dir, "levels.csv", &levels)?;
        write(dir, "summary.csv", &summary)?;
        each(&r)?;
        results.push(r);
    }
    Ok(results)
}

/// Adaptive runs over the tolerance list. Writes `levels.csv` and `summary.csv` and
/// returns the summary table.
pub fn cmd_run(cfg: &ExperimentConfig, dir: &Path) -> Result<String, CliError> {
    ensure_dir(dir)?;
    let sampler = cfg.sampler()?;
    guarded(dir, || {
        run_eps_list(cfg, sampler.as_ref(), dir, |_| Ok(()))?;
        std::fs::read_to_string(dir.join("summary.csv")).map_err(|e| CliError::Io(e.to_string()))
    })
}

/// Fixed-sample study over levels `0..=rates.max_level`. Writes `rates.csv` and
/// `rate_fit.csv`.
pub fn cmd_rates(cfg: &ExperimentConfig, dir: &Path) -> Result<RateFit, CliError> {
    ensure_dir(dir)?;
    let sampler = cfg.sampler()?;
    guarded(dir, || {
        let stats = rate_study(sampler.as_ref(), cfg.rates.max_level, cfg.rates.samples, cfg.run.seed)?;
        write(dir, "rates.csv", &rates_table(&stats))?;
        let fit = fit_rates_between(&stats, cfg.rates.fit_from, cfg.rates.max_level)?;
        write(dir, "rate_fit.csv", &rate_fit_table(&fit))?;
        Ok(fit)
    })
}

/// Multilevel against standard Monte Carlo over the tolerance list. Writes
/// `compare.csv` along with the multilevel `levels.csv` and `summary.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig, dir: &Path) -> Result<String, CliError> {
    ensure_dir(dir)?;
    let sampler = cfg.sampler()?;
    guarded(dir, || {
        let mut table = format!("{COMPARE_HEADER}\n");
        run_eps_list(cfg, sampler.as_ref(), dir, |m| {
            let std_cfg = StandardMcConfig {
                eps: m.eps,
                weak_constant: cfg.compare.weak_constant,
                pilot_samples: cfg.compare.pilot_samples,
                variance_fraction: cfg.run.variance_fraction,
                seed: cfg.run.seed,
            };
            let s = run_standard_mc(sampler.as_ref(), &std_cfg)?;
            compare_row(&mut table, m, &s);
            write(dir, "compare.csv", &table)
        })?;
        Ok(table)
    })
}

/// Value, delta and vega with the configured estimator method. Writes `greeks.csv`.
pub fn cmd_greeks(cfg: &ExperimentConfig, dir: &Path) -> Result<String, CliError> {
    ensure_dir(dir)?;
    let samplers = [("value", Quantity::Value), ("delta", Quantity::DELTA), ("vega", Quantity::VEGA)]
        .into_iter()
        .map(|(name, q)| cfg.greek_sampler(q).map(|s| (name, s)))
        .collect::<Result<Vec<_>, _>>()?;
    guarded(dir, || {
        let mut table = format!("{GREEKS_HEADER}\n");
        for (name, s) in &samplers {
            for &eps in &cfg.run.eps {
                let r = run_mlmc(s, &mlmc_config(cfg, eps))?;
                greeks_row(&mut table, name, &r);
                write(dir, "greeks.csv", &table)?;
            }
        }
        Ok(table)
    })
}

/// Runs `command` in a thread pool of `threads` workers (all cores when `None`).
pub fn execute(
    command: Command,
    cfg: &ExperimentConfig,
    dir: &Path,
    threads: Option<usize>,
) -> Result<String, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match command {
        Command::Run => cmd_run(cfg, dir),
        Command::Rates => cmd_rates(cfg, dir).map(|f| rate_fit_table(&f)),
        Command::Compare => cmd_compare(cfg, dir),
        Command::Greeks => cmd_greeks(cfg, dir),
    })
}
