//! Sensitivities of option values within the multilevel framework.
//!
//! All estimators work on scalar models and differentiate with respect to one
//! parameter `theta`. Tangent paths carry `dX_n / d theta` alongside the Milstein
//! (or Euler) recursion; the final step is then treated either by conditional
//! expectation, by splitting over resampled final increments, or by vibrato
//! (pathwise up to the penultimate step, likelihood ratio over the last).

use thiserror::Error;

use crate::normal::{cdf, pdf};
use crate::payoffs::{crossing_probability, PayoffFamily, PayoffPair, PayoffSpec, TerminalFunction};
use crate::schemes::{bridge_midpoint_scalar, Scheme, SchemeError};
use crate::sde::{IncrementSet, LevelGrid, ModelSpec, ScalarSensitivity};

/// The parameter a sensitivity is taken with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamSelector {
    InitialState(usize),
    Volatility,
    Drift,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreekError {
    #[error("model `{model}` provides no derivatives for {param:?}")]
    NoDerivatives { model: String, param: ParamSelector },
    #[error("{0:?} has no estimator for this sensitivity method")]
    Unsupported(PayoffFamily),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// A scalar path and its tangent.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentPath {
    pub values: Vec<f64>,
    pub tangents: Vec<f64>,
}

/// Value and sensitivity pairs of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GreekPairs {
    pub value: PayoffPair,
    pub sensitivity: PayoffPair,
}

fn sens(model: &ModelSpec, x: f64, param: ParamSelector) -> Result<ScalarSensitivity, GreekError> {
    model.sensitivity(x, param).ok_or_else(|| GreekError::NoDerivatives { model: model.label().into(), param })
}

/// Integrates the path and its tangent with the given scheme and increments.
pub fn tangent_path(
    model: &ModelSpec,
    scheme: Scheme,
    dt: f64,
    increments: &[f64],
    param: ParamSelector,
) -> Result<TangentPath, GreekError> {
    let mut x = model.x0()[0];
    let mut t = if param == ParamSelector::InitialState(0) { 1.0 } else { 0.0 };
    sens(model, x, param)?;
    let mut values = Vec::with_capacity(increments.len() + 1);
    let mut tangents = Vec::with_capacity(increments.len() + 1);
    values.push(x);
    tangents.push(t);
    for (n, &dw) in increments.iter().enumerate() {
        let s = sens(model, x, param)?;
        let q = if scheme == Scheme::Milstein { dw * dw - dt } else { 0.0 };
        let (h, h_x, h_th) = if scheme == Scheme::Milstein { (s.h, s.h_x, s.h_theta) } else { (0.0, 0.0, 0.0) };
        let nx = x + s.f * dt + s.g * dw + h * q;
        t = t * (1.0 + s.f_x * dt + s.g_x * dw + h_x * q) + s.f_theta * dt + s.g_theta * dw + h_th * q;
        x = nx;
        if !x.is_finite() || !t.is_finite() {
            return Err(SchemeError::NonFinite { step: n + 1 }.into());
        }
        values.push(x);
        tangents.push(t);
    }
    Ok(TangentPath { values, tangents })
}

/// Milstein tangent path on the fine grid of `inc`.
pub fn pathwise_tangent_path(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    param: ParamSelector,
) -> Result<TangentPath, GreekError> {
    if inc.steps() != grid.steps {
        return Err(SchemeError::Mismatch { expected: grid.steps, got: inc.steps() }.into());
    }
    tangent_path(model, Scheme::Milstein, grid.dt, &inc.fine, param)
}

/// Euler tangent path on the fine grid of `inc`.
pub fn euler_tangent_path(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    param: ParamSelector,
) -> Result<TangentPath, GreekError> {
    if inc.steps() != grid.steps {
        return Err(SchemeError::Mismatch { expected: grid.steps, got: inc.steps() }.into());
    }
    tangent_path(model, Scheme::Euler, grid.dt, &inc.fine, param)
}

/// Conditional Gaussian law `mu + sigma Z` of the terminal state given the path up to
/// the last (fine) step, with its tangents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LastStep {
    pub mu: f64,
    pub sigma: f64,
    pub mu_theta: f64,
    pub sigma_theta: f64,
}

/// Conditional law of the fine terminal state given the penultimate fine state.
fn fine_last_step(model: &ModelSpec, tp: &TangentPath, dt: f64, param: ParamSelector) -> Result<LastStep, GreekError> {
    let n = tp.values.len() - 2;
    let (x, t) = (tp.values[n], tp.tangents[n]);
    let s = sens(model, x, param)?;
    let sq = dt.sqrt();
    let sign = if s.g < 0.0 { -1.0 } else { 1.0 };
    Ok(LastStep {
        mu: x + s.f * dt,
        sigma: s.g.abs() * sq,
        mu_theta: t * (1.0 + s.f_x * dt) + s.f_theta * dt,
        sigma_theta: sign * (s.g_x * t + s.g_theta) * sq,
    })
}

/// Conditional law of the coarse terminal state given the penultimate coarse state and
/// the fine increment `dw_half` over the first half of the last coarse step.
fn coarse_last_step(
    model: &ModelSpec,
    tp: &TangentPath,
    fine_dt: f64,
    dw_half: f64,
    param: ParamSelector,
) -> Result<LastStep, GreekError> {
    let n = tp.values.len() - 2;
    let (x, t) = (tp.values[n], tp.tangents[n]);
    let s = sens(model, x, param)?;
    let dtc = 2.0 * fine_dt;
    let sq = fine_dt.sqrt();
    let sign = if s.g < 0.0 { -1.0 } else { 1.0 };
    let g_dot = s.g_x * t + s.g_theta;
    Ok(LastStep {
        mu: x + s.f * dtc + s.g * dw_half,
        sigma: s.g.abs() * sq,
        mu_theta: t * (1.0 + s.f_x * dtc) + s.f_theta * dtc + g_dot * dw_half,
        sigma_theta: sign * g_dot * sq,
    })
}

/// `E[P(mu + sigma Z)]` and its partial derivatives in `mu` and `sigma`.
fn conditional_payoff(spec: &PayoffSpec, mu: f64, sigma: f64) -> Result<(f64, f64, f64), GreekError> {
    let k = spec.strike;
    if sigma == 0.0 {
        return Ok(match spec.family {
            PayoffFamily::Digital => (f64::from(u8::from(mu > k)), 0.0, 0.0),
            _ => (spec.terminal.eval(mu, k), spec.terminal.slope(mu, k), 0.0),
        });
    }
    let d = (mu - k) / sigma;
    Ok(match (spec.family, spec.terminal) {
        (PayoffFamily::Digital, _) => (cdf(d), pdf(d) / sigma, -pdf(d) * d / sigma),
        (PayoffFamily::European, TerminalFunction::Call) => ((mu - k) * cdf(d) + sigma * pdf(d), cdf(d), pdf(d)),
        (PayoffFamily::European, TerminalFunction::Put) => ((k - mu) * cdf(-d) + sigma * pdf(d), -cdf(-d), pdf(d)),
        (PayoffFamily::European, TerminalFunction::Identity) => (mu, 1.0, 0.0),
        (family, _) => return Err(GreekError::Unsupported(family)),
    })
}

fn cost(grid: &LevelGrid) -> f64 {
    (grid.steps + grid.steps / 2) as f64
}

fn pairs(
    spec: &PayoffSpec,
    grid: &LevelGrid,
    value: (f64, f64),
    sensitivity: (f64, f64),
    degenerate: bool,
) -> GreekPairs {
    let d = spec.discount;
    let mk = |(f, c): (f64, f64)| PayoffPair { fine: d * f, coarse: d * c, cost_units: cost(grid), degenerate };
    GreekPairs { value: mk(value), sensitivity: mk(sensitivity) }
}

fn tangent_pair(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    param: ParamSelector,
) -> Result<(TangentPath, Option<TangentPath>), GreekError> {
    let fine = pathwise_tangent_path(model, grid, inc, param)?;
    let coarse = match grid.level {
        0 => None,
        _ => Some(tangent_path(model, Scheme::Milstein, 2.0 * grid.dt, &inc.coarse, param)?),
    };
    Ok((fine, coarse))
}

fn last_steps(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    param: ParamSelector,
) -> Result<(LastStep, Option<LastStep>), GreekError> {
    let (fine, coarse) = tangent_pair(model, grid, inc, param)?;
    let f = fine_last_step(model, &fine, grid.dt, param)?;
    let c = match coarse {
        Some(cp) => Some(coarse_last_step(model, &cp, grid.dt, inc.fine[grid.steps - 2], param)?),
        None => None,
    };
    Ok((f, c))
}

/// Pathwise sensitivity of the smoothed payoff.
///
/// European and digital payoffs are smoothed by the conditional expectation over the
/// last step; lookback and down-and-out barrier payoffs differentiate the
/// bridge-minimum and crossing-probability constructions along the whole path.
pub fn smoothed_delta_vega_pair(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    spec: &PayoffSpec,
    param: ParamSelector,
) -> Result<GreekPairs, GreekError> {
    match spec.family {
        PayoffFamily::European | PayoffFamily::Digital => {
            let (f, c) = last_steps(model, grid, inc, param)?;
            let eval = |s: &LastStep| -> Result<(f64, f64), GreekError> {
                let (v, dm, ds) = conditional_payoff(spec, s.mu, s.sigma)?;
                Ok((v, dm * s.mu_theta + ds * s.sigma_theta))
            };
            let (fv, fs) = eval(&f)?;
            let (cv, cs) = match &c {
                Some(c) => eval(c)?,
                None => (0.0, 0.0),
            };
            let degenerate = f.sigma == 0.0 || c.is_some_and(|c| c.sigma == 0.0);
            Ok(pairs(spec, grid, (fv, cv), (fs, cs), degenerate))
        }
        PayoffFamily::Lookback => {
            let (fine, coarse) = tangent_pair(model, grid, inc, param)?;
            let (fv, fs) = lookback_fine(model, &fine, grid.dt, inc, param)?;
            let (cv, cs) = match &coarse {
                Some(c) => lookback_coarse(model, c, grid.dt, inc, param)?,
                None => (0.0, 0.0),
            };
            Ok(pairs(spec, grid, (fv, cv), (fs, cs), false))
        }
        PayoffFamily::Barrier(_) => {
            let (fine, coarse) = tangent_pair(model, grid, inc, param)?;
            let (fv, fs, fd) = barrier_leg(model, spec, &fine, grid.dt, None, param)?;
            let (cv, cs, cd) = match &coarse {
                Some(c) => barrier_leg(model, spec, c, grid.dt, Some(inc), param)?,
                None => (0.0, 0.0, false),
            };
            Ok(pairs(spec, grid, (fv, cv), (fs, cs), fd || cd))
        }
        family => Err(GreekError::Unsupported(family)),
    }
}

/// Bridge minimum and its tangent given tangents of the endpoints and of `g`.
fn bridge_minimum_tangent(a: f64, b: f64, g: f64, h: f64, u: f64, ta: f64, tb: f64, tg: f64) -> (f64, f64) {
    let lu = u.ln();
    let disc = (b - a) * (b - a) - 2.0 * g * g * h * lu;
    let r = disc.sqrt();
    let m = 0.5 * (a + b - r);
    if r == 0.0 {
        return (m, 0.5 * (ta + tb));
    }
    let da = 0.5 * (1.0 + (b - a) / r);
    let db = 0.5 * (1.0 - (b - a) / r);
    let dg = g * h * lu / r;
    (m, da * ta + db * tb + dg * tg)
}

fn lookback_fine(
    model: &ModelSpec,
    tp: &TangentPath,
    h: f64,
    inc: &IncrementSet,
    param: ParamSelector,
) -> Result<(f64, f64), GreekError> {
    let (mut min, mut tmin) = (f64::INFINITY, 0.0);
    for n in 0..tp.values.len() - 1 {
        let (a, b) = (tp.values[n], tp.values[n + 1]);
        let s = sens(model, a, param)?;
        let tg = s.g_x * tp.tangents[n] + s.g_theta;
        let (m, tm) = bridge_minimum_tangent(a, b, s.g, h, inc.uniforms[n], tp.tangents[n], tp.tangents[n + 1], tg);
        if m < min {
            min = m;
            tmin = tm;
        }
    }
    let last = tp.values.len() - 1;
    Ok((tp.values[last] - min, tp.tangents[last] - tmin))
}

fn lookback_coarse(
    model: &ModelSpec,
    tp: &TangentPath,
    h: f64,
    inc: &IncrementSet,
    param: ParamSelector,
) -> Result<(f64, f64), GreekError> {
    let (mut min, mut tmin) = (f64::INFINITY, 0.0);
    for n in 0..tp.values.len() - 1 {
        let (a, b) = (tp.values[n], tp.values[n + 1]);
        let (ta, tb) = (tp.tangents[n], tp.tangents[n + 1]);
        let s = sens(model, a, param)?;
        let tg = s.g_x * ta + s.g_theta;
        let bridge = inc.fine[2 * n] - 0.5 * inc.coarse[n];
        let mid = bridge_midpoint_scalar(a, b, s.g, inc.fine[2 * n], inc.coarse[n]);
        let tmid = 0.5 * (ta + tb) + tg * bridge;
        for (m, tm) in [
            bridge_minimum_tangent(a, mid, s.g, h, inc.uniforms[2 * n], ta, tmid, tg),
            bridge_minimum_tangent(mid, b, s.g, h, inc.uniforms[2 * n + 1], tmid, tb, tg),
        ] {
            if m < min {
                min = m;
                tmin = tm;
            }
        }
    }
    let last = tp.values.len() - 1;
    Ok((tp.values[last] - min, tp.tangents[last] - tmin))
}

/// Crossing probability and its tangent.
fn crossing_tangent(a: f64, b: f64, barrier: f64, g: f64, h: f64, ta: f64, tb: f64, tg: f64) -> (f64, f64, bool) {
    let (p, degenerate) = crossing_probability(a, b, barrier, g, h);
    if p == 1.0 || g == 0.0 {
        return (p, 0.0, degenerate);
    }
    let (da, db) = (a - barrier, b - barrier);
    let tp = p * (-2.0 / (g * g * h)) * (db * ta + da * tb - 2.0 * da * db * tg / g);
    (p, tp, degenerate)
}

/// Down-and-out survival payoff and its tangent along one leg. The coarse leg (when
/// `inc` is given) interpolates the midpoints and uses `g(X_n)` for both halves.
fn barrier_leg(
    model: &ModelSpec,
    spec: &PayoffSpec,
    tp: &TangentPath,
    h: f64,
    inc: Option<&IncrementSet>,
    param: ParamSelector,
) -> Result<(f64, f64, bool), GreekError> {
    let bar = spec.barrier;
    let (mut surv, mut tsurv, mut degenerate) = (1.0, 0.0, false);
    let mut step = |p: f64, tpv: f64, d: bool| {
        tsurv = tsurv * (1.0 - p) - surv * tpv;
        surv *= 1.0 - p;
        degenerate |= d;
    };
    for n in 0..tp.values.len() - 1 {
        let (a, b) = (tp.values[n], tp.values[n + 1]);
        let (ta, tb) = (tp.tangents[n], tp.tangents[n + 1]);
        let s = sens(model, a, param)?;
        let tg = s.g_x * ta + s.g_theta;
        match inc {
            None => {
                let (p, t, d) = crossing_tangent(a, b, bar, s.g, h, ta, tb, tg);
                step(p, t, d);
            }
            Some(inc) => {
                let bridge = inc.fine[2 * n] - 0.5 * inc.coarse[n];
                let mid = bridge_midpoint_scalar(a, b, s.g, inc.fine[2 * n], inc.coarse[n]);
                let tmid = 0.5 * (ta + tb) + tg * bridge;
                let (p, t, d) = crossing_tangent(a, mid, bar, s.g, h, ta, tmid, tg);
                step(p, t, d);
                let (p, t, d) = crossing_tangent(mid, b, bar, s.g, h, tmid, tb, tg);
                step(p, t, d);
            }
        }
    }
    let last = tp.values.len() - 1;
    let (x, tx) = (tp.values[last], tp.tangents[last]);
    let f = spec.terminal.eval(x, spec.strike);
    let fx = spec.terminal.slope(x, spec.strike);
    Ok((f * surv, fx * tx * surv + f * tsurv, degenerate))
}

/// Split pathwise estimator: the last step is resampled with the normals `z`, shared by
/// the fine and coarse legs; the coarse leg keeps the fine increment over the first
/// half of its last step.
pub fn split_pathwise_pair(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    spec: &PayoffSpec,
    param: ParamSelector,
    z: &[f64],
) -> Result<GreekPairs, GreekError> {
    if spec.family != PayoffFamily::European {
        return Err(GreekError::Unsupported(spec.family));
    }
    assert!(!z.is_empty(), "split count must be at least 1");
    let (f, c) = last_steps(model, grid, inc, param)?;
    let s = z.len() as f64;
    let eval = |l: &LastStep| {
        let (mut v, mut d) = (0.0, 0.0);
        for &zi in z {
            let x = l.mu + l.sigma * zi;
            v += spec.terminal.eval(x, spec.strike);
            d += spec.terminal.slope(x, spec.strike) * (l.mu_theta + l.sigma_theta * zi);
        }
        (v / s, d / s)
    };
    let (fv, fs) = eval(&f);
    let (cv, cs) = c.as_ref().map_or((0.0, 0.0), eval);
    let mut out = pairs(spec, grid, (fv, cv), (fs, cs), false);
    let extra = s * if grid.level == 0 { 1.0 } else { 2.0 };
    out.value.cost_units += extra;
    out.sensitivity.cost_units += extra;
    Ok(out)
}

/// Vibrato estimator: pathwise tangents of the conditional mean and standard deviation
/// of the last step combined with likelihood-ratio weights over the normals `z`, which
/// are shared by the fine and coarse legs.
///
/// Each `z` is used with its antithetic `-z`, and `P(mu)` is subtracted in the
/// `sigma` score as a control variate. Both leave the expectation unchanged, but they
/// remove the `O(1/sigma)` terms that otherwise decorrelate the two legs.
pub fn vibrato_pair(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    spec: &PayoffSpec,
    param: ParamSelector,
    z: &[f64],
) -> Result<GreekPairs, GreekError> {
    if !matches!(spec.family, PayoffFamily::European | PayoffFamily::Digital) {
        return Err(GreekError::Unsupported(spec.family));
    }
    assert!(!z.is_empty(), "split count must be at least 1");
    let (f, c) = last_steps(model, grid, inc, param)?;
    let payoff = |x: f64| match spec.family {
        PayoffFamily::Digital => f64::from(u8::from(x > spec.strike)),
        _ => spec.terminal.eval(x, spec.strike),
    };
    let s = z.len() as f64;
    let mut degenerate = false;
    let mut eval = |l: &LastStep| {
        if l.sigma == 0.0 {
            degenerate = true;
            let slope = match spec.family {
                PayoffFamily::Digital => 0.0,
                _ => spec.terminal.slope(l.mu, spec.strike),
            };
            return (payoff(l.mu), slope * l.mu_theta);
        }
        let p0 = payoff(l.mu);
        let (mut v, mut score_mu, mut score_sigma) = (0.0, 0.0, 0.0);
        for &zi in z {
            let (up, down) = (payoff(l.mu + l.sigma * zi), payoff(l.mu - l.sigma * zi));
            v += 0.5 * (up + down);
            score_mu += 0.5 * (up - down) * zi;
            score_sigma += 0.5 * (up + down - 2.0 * p0) * (zi * zi - 1.0);
        }
        (v / s, (l.mu_theta * score_mu + l.sigma_theta * score_sigma) / (s * l.sigma))
    };
    let (fv, fs) = eval(&f);
    let (cv, cs) = c.as_ref().map_or((0.0, 0.0), &mut eval);
    let mut out = pairs(spec, grid, (fv, cv), (fs, cs), degenerate);
    let extra = s * if grid.level == 0 { 1.0 } else { 2.0 };
    out.value.cost_units += extra;
    out.sensitivity.cost_units += extra;
    Ok(out)
}

/// Single-level likelihood-ratio delta (`theta = x0`) on the Euler path: the payoff
/// times the score of the first transition density. Its variance grows like `1/dt`,
/// so it is only provided as a reference.
pub fn lrm_delta_sample(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    spec: &PayoffSpec,
) -> Result<(f64, f64), GreekError> {
    let param = ParamSelector::InitialState(0);
    let tp = euler_tangent_path(model, grid, inc, param)?;
    let x0 = model.x0()[0];
    let s = sens(model, x0, param)?;
    let dt = grid.dt;
    let sigma = s.g.abs() * dt.sqrt();
    let mu_x = 1.0 + s.f_x * dt;
    let sigma_x = s.g.signum() * s.g_x * dt.sqrt();
    let resid = s.g * inc.fine[0];
    let score = resid / (sigma * sigma) * mu_x + (resid * resid / (sigma * sigma * sigma) - 1.0 / sigma) * sigma_x;
    let xt = tp.values[tp.values.len() - 1];
    let p = match spec.family {
        PayoffFamily::Digital => f64::from(u8::from(xt > spec.strike)),
        PayoffFamily::European => spec.terminal.eval(xt, spec.strike),
        family => return Err(GreekError::Unsupported(family)),
    };
    Ok((spec.discount * p, spec.discount * p * score))
}

/// Split count minimising `(v1 + v2/s)(c1 + c2 s)`, rounded up and at least 1.
/// Returns 1 (with a warning) when `v1` or `c2` is zero.
pub fn optimal_split_count(v1: f64, v2: f64, c1: f64, c2: f64) -> usize {
    if !(v1 > 0.0 && c2 > 0.0) {
        log::warn!("optimal split count undefined for v1 = {v1}, c2 = {c2}; using 1");
        return 1;
    }
    let s = (v2 * c1 / (v1 * c2)).sqrt().ceil();
    if s.is_finite() && s >= 1.0 {
        s as usize
    } else {
        1
    }
}
