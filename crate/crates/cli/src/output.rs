//! CSV writers. Every float is written with 17 significant digits so that values
//! round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mlmc_core::{LevelStats, MlmcResult, RateFit, StandardMcResult};

use crate::CliError;

pub const LEVELS_HEADER: &str = "eps,level,samples,mean_diff,var_diff,mean_fine,var_fine,cost";
pub const SUMMARY_HEADER: &str = "eps,estimate,std_error,total_cost,alpha,beta,gamma";
pub const RATES_HEADER: &str = "level,samples,mean_diff,var_diff,mean_fine,var_fine,cost";
pub const RATE_FIT_HEADER: &str = "alpha,beta,gamma,alpha_se,beta_se,gamma_se";
pub const COMPARE_HEADER: &str =
    "eps,mlmc_estimate,mlmc_cost,mlmc_eps2_cost,std_estimate,std_level,std_samples,std_cost,std_eps2_cost";
pub const GREEKS_HEADER: &str = "quantity,eps,estimate,std_error,total_cost,alpha,beta,gamma";

/// File written next to partial outputs when a run aborts.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

pub fn float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), float)
}

fn level_fields(s: &LevelStats) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        s.level,
        s.samples,
        float(s.mean_diff()),
        opt(s.var_diff()),
        float(s.mean_fine()),
        opt(s.var_fine()),
        float(s.cost_per_sample()),
    )
}

pub fn levels_rows(out: &mut String, r: &MlmcResult) {
    for s in &r.levels {
        let _ = writeln!(out, "{},{}", float(r.eps), level_fields(s));
    }
}

fn rate_fields(rates: Option<RateFit>) -> String {
    match rates {
        Some(f) => format!("{},{},{}", float(f.alpha), float(f.beta), float(f.gamma)),
        None => "nan,nan,nan".into(),
    }
}

pub fn summary_row(out: &mut String, r: &MlmcResult) {
    let _ = writeln!(
        out,
        "{},{},{},{},{}",
        float(r.eps),
        float(r.estimate),
        float(r.std_error),
        float(r.total_cost),
        rate_fields(r.rates)
    );
}

pub fn greeks_row(out: &mut String, quantity: &str, r: &MlmcResult) {
    let _ = write!(out, "{quantity},");
    summary_row(out, r);
}

pub fn rates_table(stats: &[LevelStats]) -> String {
    let mut out = format!("{RATES_HEADER}\n");
    for s in stats {
        let _ = writeln!(out, "{}", level_fields(s));
    }
    out
}

pub fn rate_fit_table(f: &RateFit) -> String {
    format!(
        "{RATE_FIT_HEADER}\n{},{},{},{},{},{}\n",
        float(f.alpha),
        float(f.beta),
        float(f.gamma),
        float(f.alpha_se),
        float(f.beta_se),
        float(f.gamma_se)
    )
}

pub fn compare_row(out: &mut String, m: &MlmcResult, s: &StandardMcResult) {
    let e2 = m.eps * m.eps;
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        float(m.eps),
        float(m.estimate),
        float(m.total_cost),
        float(e2 * m.total_cost),
        float(s.estimate),
        s.level,
        s.samples,
        float(s.cost),
        float(e2 * s.cost),
    );
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), contents).map_err(|e| CliError::Io(format!("{}: {e}", dir.join(name).display())))
}

/// Flags the outputs in `dir` as partial.
pub fn mark_incomplete(dir: &Path, reason: &str) {
    if let Err(e) = fs::write(dir.join(INCOMPLETE_MARKER), format!("{reason}\n")) {
        log::error!("cannot write the incomplete marker: {e}");
    }
}
