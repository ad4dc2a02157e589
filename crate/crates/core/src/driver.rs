//! The adaptive multilevel estimator and the standard Monte Carlo baseline.

use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::{LevelSampler, SampleError};
use crate::payoffs::PayoffPair;
use crate::sde::{LevelGrid, StreamKey};

/// Stream domain of adaptive multilevel runs.
pub const DOMAIN_MLMC: u16 = 0;
/// Stream domain of standard Monte Carlo runs.
pub const DOMAIN_STANDARD: u16 = 1;
/// Stream domain of fixed-sample rate studies.
pub const DOMAIN_RATES: u16 = 2;

const CHUNK: u64 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("no levels given")]
    EmptyLevels,
    #[error("rate fit needs at least 3 levels with 2 or more samples, got {0}")]
    TooFewLevels(usize),
    #[error("sample {index} at level {level} failed: {source}")]
    Sample { level: u32, index: u64, source: SampleError },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Running sums of one level.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LevelStats {
    pub level: u32,
    pub samples: u64,
    pub sum_diff: f64,
    pub sum_diff_sq: f64,
    pub sum_fine: f64,
    pub sum_fine_sq: f64,
    pub sum_coarse: f64,
    pub sum_coarse_sq: f64,
    pub cost_units: f64,
    /// Samples that hit a zero-diffusion limit.
    pub degenerate: u64,
}

fn unbiased(n: u64, s: f64, s2: f64) -> Option<f64> {
    (n >= 2).then(|| {
        let nf = n as f64;
        ((s2 - s * s / nf) / (nf - 1.0)).max(0.0)
    })
}

impl LevelStats {
    pub fn new(level: u32) -> Self {
        Self { level, ..Default::default() }
    }

    pub fn push(&mut self, p: &PayoffPair) {
        let d = p.fine - p.coarse;
        self.samples += 1;
        self.sum_diff += d;
        self.sum_diff_sq += d * d;
        self.sum_fine += p.fine;
        self.sum_fine_sq += p.fine * p.fine;
        self.sum_coarse += p.coarse;
        self.sum_coarse_sq += p.coarse * p.coarse;
        self.cost_units += p.cost_units;
        self.degenerate += u64::from(p.degenerate);
    }

    pub fn merge(&mut self, o: &LevelStats) {
        self.samples += o.samples;
        self.sum_diff += o.sum_diff;
        self.sum_diff_sq += o.sum_diff_sq;
        self.sum_fine += o.sum_fine;
        self.sum_fine_sq += o.sum_fine_sq;
        self.sum_coarse += o.sum_coarse;
        self.sum_coarse_sq += o.sum_coarse_sq;
        self.cost_units += o.cost_units;
        self.degenerate += o.degenerate;
    }

    fn mean(&self, s: f64) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            s / self.samples as f64
        }
    }

    pub fn mean_diff(&self) -> f64 {
        self.mean(self.sum_diff)
    }
    pub fn mean_fine(&self) -> f64 {
        self.mean(self.sum_fine)
    }
    pub fn mean_coarse(&self) -> f64 {
        self.mean(self.sum_coarse)
    }
    /// Unbiased sample variance of the correction; `None` below 2 samples.
    pub fn var_diff(&self) -> Option<f64> {
        unbiased(self.samples, self.sum_diff, self.sum_diff_sq)
    }
    pub fn var_fine(&self) -> Option<f64> {
        unbiased(self.samples, self.sum_fine, self.sum_fine_sq)
    }
    pub fn var_coarse(&self) -> Option<f64> {
        unbiased(self.samples, self.sum_coarse, self.sum_coarse_sq)
    }
    pub fn cost_per_sample(&self) -> f64 {
        self.mean(self.cost_units)
    }
}

/// Draws samples `start..start + count` of one level. Samples are generated in parallel
/// in fixed chunks whose sums are combined in index order, so the result does not
/// depend on the number of threads.
pub fn sample_level<S: LevelSampler + ?Sized>(
    sampler: &S,
    level: u32,
    seed: u64,
    domain: u16,
    start: u64,
    count: u64,
) -> Result<LevelStats, DriverError> {
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Result<LevelStats, DriverError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut st = LevelStats::new(level);
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(start + count);
            for index in lo..hi {
                let mut stream = StreamKey::new(seed, domain, level, index).stream();
                let p = sampler.sample(level, &mut stream).map_err(|source| DriverError::Sample {
                    level,
                    index,
                    source,
                })?;
                st.push(&p);
            }
            Ok(st)
        })
        .collect();
    let mut total = LevelStats::new(level);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// `N_l = ceil(2 eps^-2 sqrt(V_l dt_l) sum_k sqrt(V_k / dt_k))`.
pub fn optimal_samples(variances: &[f64], steps: &[f64], eps: f64) -> Result<Vec<u64>, DriverError> {
    optimal_samples_with_split(variances, steps, eps, 0.5)
}

/// As [`optimal_samples`] with `variance_fraction * eps^2` budgeted to the variance.
pub fn optimal_samples_with_split(
    variances: &[f64],
    steps: &[f64],
    eps: f64,
    variance_fraction: f64,
) -> Result<Vec<u64>, DriverError> {
    if variances.is_empty() || variances.len() != steps.len() {
        return Err(DriverError::EmptyLevels);
    }
    let sum: f64 = variances.iter().zip(steps).map(|(v, h)| (v / h).sqrt()).sum();
    let scale = sum / (variance_fraction * eps * eps);
    Ok(variances.iter().zip(steps).map(|(v, h)| (scale * (v * h).sqrt()).ceil() as u64).collect())
}

/// Smallest `L` with `c T 2^-L <= eps / sqrt(2)`.
pub fn max_level_for_bias(eps: f64, weak_constant: f64, horizon: f64) -> u32 {
    let mut level = 0;
    let mut bias = weak_constant * horizon;
    while bias * std::f64::consts::SQRT_2 > eps && level < 60 {
        bias *= 0.5;
        level += 1;
    }
    level
}

/// Fitted decay rates `E|P_l - P_l-1| ~ 2^-alpha l`, `V_l ~ 2^-beta l` and
/// `C_l ~ 2^gamma l`, with least-squares standard errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_se: f64,
    pub beta_se: f64,
    pub gamma_se: f64,
}

/// Least-squares slope of `y` against `x` and its standard error (NaN for 2 points).
pub fn fit_rates_raw(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se)
}

/// Rates over all levels `>= 1`.
pub fn fit_rates(stats: &[LevelStats]) -> Result<RateFit, DriverError> {
    fit_rates_between(stats, 1, u32::MAX)
}

/// Rates over levels in `lo..=hi`.
pub fn fit_rates_between(stats: &[LevelStats], lo: u32, hi: u32) -> Result<RateFit, DriverError> {
    let usable = stats.iter().filter(|s| s.samples >= 2).count();
    let sel: Vec<&LevelStats> =
        stats.iter().filter(|s| s.samples >= 2 && s.level >= lo.max(1) && s.level <= hi).collect();
    if usable < 3 || sel.len() < 2 {
        return Err(DriverError::TooFewLevels(usable));
    }
    let x: Vec<f64> = sel.iter().map(|s| f64::from(s.level)).collect();
    let fit = |f: &dyn Fn(&LevelStats) -> f64| {
        let y: Vec<f64> = sel.iter().map(|s| f(s).max(f64::MIN_POSITIVE).log2()).collect();
        fit_rates_raw(&x, &y)
    };
    let (a, a_se) = fit(&|s| s.mean_diff().abs());
    let (b, b_se) = fit(&|s| s.var_diff().unwrap_or(0.0));
    let (g, g_se) = fit(&|s| s.cost_per_sample());
    Ok(RateFit { alpha: -a, beta: -b, gamma: g, alpha_se: a_se, beta_se: b_se, gamma_se: g_se })
}

/// Fixed-sample study: `samples` draws at each level `0..=max_level`.
pub fn rate_study<S: LevelSampler + ?Sized>(
    sampler: &S,
    max_level: u32,
    samples: u64,
    seed: u64,
) -> Result<Vec<LevelStats>, DriverError> {
    (0..=max_level).map(|l| sample_level(sampler, l, seed, DOMAIN_RATES, 0, samples)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmcConfig {
    /// Target root-mean-square error.
    pub eps: f64,
    pub initial_samples: u64,
    pub min_level: u32,
    pub max_level: u32,
    /// Fraction of `eps^2` given to the variance; the rest bounds the squared bias.
    pub variance_fraction: f64,
    /// Weak rate used by the bias test; fitted when `None`.
    pub alpha: Option<f64>,
    pub seed: u64,
}

impl MlmcConfig {
    pub fn new(eps: f64, seed: u64) -> Self {
        Self { eps, initial_samples: 100, min_level: 2, max_level: 20, variance_fraction: 0.5, alpha: None, seed }
    }

    fn validate(&self) -> Result<(), DriverError> {
        if !(self.eps > 0.0) {
            return Err(DriverError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.variance_fraction > 0.0 && self.variance_fraction < 1.0) {
            return Err(DriverError::Config(format!(
                "variance fraction must lie in (0, 1), got {}",
                self.variance_fraction
            )));
        }
        if self.initial_samples < 2 {
            return Err(DriverError::Config("at least 2 initial samples are needed".into()));
        }
        if self.min_level > self.max_level {
            return Err(DriverError::Config("min_level exceeds max_level".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlmcResult {
    pub estimate: f64,
    /// Estimated variance of `estimate`, `sum_l V_l / N_l`.
    pub variance: f64,
    pub std_error: f64,
    pub levels: Vec<LevelStats>,
    pub rates: Option<RateFit>,
    pub total_cost: f64,
    pub bias_estimate: f64,
    pub final_level: u32,
    pub converged: bool,
    pub eps: f64,
}

fn level_variances(stats: &[LevelStats], beta: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(stats.len());
    for (l, s) in stats.iter().enumerate() {
        let v = match s.var_diff() {
            Some(v) => v,
            None if l > 0 => out[l - 1] / 2f64.powf(beta),
            None => 0.0,
        };
        out.push(v);
    }
    out
}

fn bias_bound(stats: &[LevelStats], alpha: f64) -> f64 {
    let l = stats.len() - 1;
    let r = 2f64.powf(alpha);
    let last = stats[l].mean_diff().abs() / (r - 1.0);
    if l == 0 {
        return last;
    }
    last.max(stats[l - 1].mean_diff().abs() / (r * (r - 1.0)))
}

/// Adaptive multilevel estimator.
///
/// Starts with levels `0..=min_level`, draws `initial_samples` on each new level, tops
/// every level up to its optimal sample count and adds a level while the bias test
/// fails. If `max_level` is reached first the partial result has `converged = false`.
pub fn run_mlmc<S: LevelSampler + ?Sized>(sampler: &S, cfg: &MlmcConfig) -> Result<MlmcResult, DriverError> {
    cfg.validate()?;
    if cfg.eps >= (-1f64).exp() {
        log::warn!("eps = {} is not below 1/e", cfg.eps);
    }
    let horizon = sampler.horizon();
    let mut stats: Vec<LevelStats> = (0..=cfg.min_level).map(LevelStats::new).collect();
    let mut extra: Vec<u64> = vec![cfg.initial_samples; stats.len()];
    let bias_budget = (1.0 - cfg.variance_fraction).sqrt() * cfg.eps;
    let (mut alpha, mut beta) = (1.0, 1.0);
    let (converged, bias) = loop {
        for (l, n) in extra.iter().enumerate() {
            if *n > 0 {
                let s = sample_level(sampler, l as u32, cfg.seed, DOMAIN_MLMC, stats[l].samples, *n)?;
                stats[l].merge(&s);
            }
        }
        if let Ok(fit) = fit_rates(&stats) {
            alpha = fit.alpha.max(0.5);
            beta = fit.beta.max(0.5);
        }
        if let Some(a) = cfg.alpha {
            alpha = a;
        }
        let v = level_variances(&stats, beta);
        let dts: Vec<f64> = (0..stats.len()).map(|l| LevelGrid::new(l as u32, horizon).dt).collect();
        let target = optimal_samples_with_split(&v, &dts, cfg.eps, cfg.variance_fraction)?;
        extra = stats.iter().zip(&target).map(|(s, &n)| n.saturating_sub(s.samples)).collect();
        if extra.iter().any(|&n| n > 0) {
            continue;
        }
        let bias = bias_bound(&stats, alpha);
        log::info!(
            "eps = {}: L = {}, N = {:?}, bias bound {bias:.3e}",
            cfg.eps,
            stats.len() - 1,
            stats.iter().map(|s| s.samples).collect::<Vec<_>>()
        );
        if bias <= bias_budget {
            break (true, bias);
        }
        if stats.len() as u32 > cfg.max_level {
            log::warn!("maximum level {} reached before the bias test passed", cfg.max_level);
            break (false, bias);
        }
        stats.push(LevelStats::new(stats.len() as u32));
        extra.push(cfg.initial_samples);
    };
    let estimate = stats.iter().map(LevelStats::mean_diff).sum();
    let variance: f64 = level_variances(&stats, beta).iter().zip(&stats).map(|(v, s)| v / s.samples as f64).sum();
    Ok(MlmcResult {
        estimate,
        variance,
        std_error: variance.sqrt(),
        rates: fit_rates(&stats).ok(),
        total_cost: stats.iter().map(|s| s.cost_units).sum(),
        bias_estimate: bias,
        final_level: stats.len() as u32 - 1,
        converged,
        levels: stats,
        eps: cfg.eps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StandardMcConfig {
    pub eps: f64,
    /// Constant `c` of the weak error bound `c T 2^-L`.
    pub weak_constant: f64,
    /// Samples drawn to estimate the variance; they count towards the estimate and the cost.
    pub pilot_samples: u64,
    pub variance_fraction: f64,
    pub seed: u64,
}

impl StandardMcConfig {
    pub fn new(eps: f64, seed: u64) -> Self {
        Self { eps, weak_constant: 1.0, pilot_samples: 100, variance_fraction: 0.5, seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StandardMcResult {
    pub estimate: f64,
    pub std_error: f64,
    pub level: u32,
    pub samples: u64,
    /// Fine-path timesteps only.
    pub cost: f64,
}

/// Single-level Monte Carlo on the fine leg at the level chosen from the weak constant,
/// with enough samples for a variance of `variance_fraction * eps^2`.
pub fn run_standard_mc<S: LevelSampler + ?Sized>(
    sampler: &S,
    cfg: &StandardMcConfig,
) -> Result<StandardMcResult, DriverError> {
    if !(cfg.eps > 0.0) || cfg.pilot_samples < 2 {
        return Err(DriverError::Config("standard MC needs eps > 0 and at least 2 pilot samples".into()));
    }
    let level = max_level_for_bias(cfg.eps, cfg.weak_constant, sampler.horizon());
    let mut st = sample_level(sampler, level, cfg.seed, DOMAIN_STANDARD, 0, cfg.pilot_samples)?;
    let v = st.var_fine().unwrap_or(0.0);
    let n = ((v / (cfg.variance_fraction * cfg.eps * cfg.eps)).ceil() as u64).max(cfg.pilot_samples);
    if n > st.samples {
        let more = sample_level(sampler, level, cfg.seed, DOMAIN_STANDARD, st.samples, n - st.samples)?;
        st.merge(&more);
    }
    let var = st.var_fine().unwrap_or(0.0);
    Ok(StandardMcResult {
        estimate: st.mean_fine(),
        std_error: (var / st.samples as f64).sqrt(),
        level,
        samples: st.samples,
        cost: st.samples as f64 * (1u64 << level) as f64,
    })
}
