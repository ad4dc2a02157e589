//! Fine and coarse payoff estimators.
//!
//! Every pair function returns the fine-leg value `P^f_l` and the coarse-leg value
//! `P^c_{l-1}` of one sample; the coarse value is 0 at level 0. Smoothed estimators in
//! Milstein mode use different fine and coarse constructions whose expectations
//! agree level by level, so the telescoping sum is preserved.

use thiserror::Error;

use crate::normal;
use crate::schemes::{bridge_midpoint_scalar, CoupledPaths, PathState};
use crate::sde::{IncrementSet, ModelSpec};

/// Offset correcting the discrete-sampling bias of the Euler lookback minimum.
pub const BETA_STAR: f64 = 0.5826;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayoffError {
    #[error("strike must be positive for {0:?}, got {1}")]
    Strike(TerminalFunction, f64),
    #[error("down barrier {barrier} is not below the initial state {x0}")]
    BarrierAboveStart { barrier: f64, x0: f64 },
    #[error("up barrier {barrier} is not above the initial state {x0}")]
    BarrierBelowStart { barrier: f64, x0: f64 },
    #[error("{family:?} is not available in {mode:?} mode")]
    Unsupported { family: PayoffFamily, mode: SchemeMode },
    #[error("{0:?} in smoothed mode needs a scalar model")]
    NeedsScalar(PayoffFamily),
    #[error("component {component} out of range for dimension {dimension}")]
    Component { component: usize, dimension: usize },
    #[error("discount factor must be positive, got {0}")]
    Discount(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierKind {
    DownOut,
    UpOut,
    DownIn,
    UpIn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayoffFamily {
    European,
    Asian,
    Lookback,
    Barrier(BarrierKind),
    Digital,
}

/// Terminal function `f(x)` of European, Asian and barrier payoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminalFunction {
    Call,
    Put,
    /// `f(x) = x`.
    Identity,
}

impl TerminalFunction {
    pub fn eval(self, x: f64, strike: f64) -> f64 {
        match self {
            Self::Call => (x - strike).max(0.0),
            Self::Put => (strike - x).max(0.0),
            Self::Identity => x,
        }
    }

    /// Derivative in `x` (right derivative at the kink).
    pub fn slope(self, x: f64, strike: f64) -> f64 {
        match self {
            Self::Call => f64::from(u8::from(x > strike)),
            Self::Put => -f64::from(u8::from(x < strike)),
            Self::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeMode {
    Euler,
    MilsteinSmoothed,
    Antithetic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PayoffSpec {
    pub family: PayoffFamily,
    pub strike: f64,
    pub barrier: f64,
    pub terminal: TerminalFunction,
    pub mode: SchemeMode,
    /// State component the payoff reads (0 for scalar models).
    pub component: usize,
    /// Multiplies both legs, e.g. `exp(-rT)`.
    pub discount: f64,
}

impl PayoffSpec {
    pub fn new(family: PayoffFamily, mode: SchemeMode) -> Self {
        Self { family, strike: 1.0, barrier: 0.0, terminal: TerminalFunction::Call, mode, component: 0, discount: 1.0 }
    }

    pub fn call(strike: f64, mode: SchemeMode) -> Self {
        Self { strike, ..Self::new(PayoffFamily::European, mode) }
    }

    pub fn with_strike(mut self, strike: f64) -> Self {
        self.strike = strike;
        self
    }
    pub fn with_barrier(mut self, barrier: f64) -> Self {
        self.barrier = barrier;
        self
    }
    pub fn with_terminal(mut self, terminal: TerminalFunction) -> Self {
        self.terminal = terminal;
        self
    }
    pub fn with_component(mut self, component: usize) -> Self {
        self.component = component;
        self
    }
    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    /// Checks that the payoff is well posed for `model` and supported in its mode.
    pub fn validate(&self, model: &ModelSpec) -> Result<(), PayoffError> {
        use PayoffFamily::*;
        if self.component >= model.dimension() {
            return Err(PayoffError::Component { component: self.component, dimension: model.dimension() });
        }
        if !(self.discount > 0.0) {
            return Err(PayoffError::Discount(self.discount));
        }
        let uses_terminal = matches!(self.family, European | Asian | Barrier(_));
        if uses_terminal && self.terminal != TerminalFunction::Identity && !(self.strike > 0.0) {
            return Err(PayoffError::Strike(self.terminal, self.strike));
        }
        if self.family == Digital && !(self.strike > 0.0) {
            return Err(PayoffError::Strike(TerminalFunction::Call, self.strike));
        }
        let x0 = model.x0()[self.component];
        match self.family {
            Barrier(BarrierKind::DownOut | BarrierKind::DownIn) if self.barrier >= x0 => {
                return Err(PayoffError::BarrierAboveStart { barrier: self.barrier, x0 })
            }
            Barrier(BarrierKind::UpOut | BarrierKind::UpIn) if self.barrier <= x0 => {
                return Err(PayoffError::BarrierBelowStart { barrier: self.barrier, x0 })
            }
            _ => {}
        }
        let unsupported = Err(PayoffError::Unsupported { family: self.family, mode: self.mode });
        match self.mode {
            SchemeMode::Antithetic if !matches!(self.family, European | Asian) => return unsupported,
            SchemeMode::MilsteinSmoothed => {
                if let Barrier(kind) = self.family {
                    if kind != BarrierKind::DownOut {
                        return unsupported;
                    }
                }
                if matches!(self.family, Lookback | Barrier(_) | Digital | Asian) && !model.is_scalar() {
                    return Err(PayoffError::NeedsScalar(self.family));
                }
            }
            SchemeMode::Euler if matches!(self.family, Lookback) && !model.is_scalar() => {
                return Err(PayoffError::NeedsScalar(self.family))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Fine and coarse payoff of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PayoffPair {
    pub fine: f64,
    pub coarse: f64,
    /// Timesteps consumed by all paths of the sample.
    pub cost_units: f64,
    /// Set when a degenerate limit (zero diffusion) was taken.
    pub degenerate: bool,
}

impl PayoffPair {
    pub fn diff(&self) -> f64 {
        self.fine - self.coarse
    }
}

fn steps(p: &PathState) -> usize {
    p.len() - 1
}

/// Timesteps of all paths in `paths`.
pub fn path_cost(paths: &CoupledPaths) -> f64 {
    let c = paths.coarse.as_ref().map_or(0, steps);
    let a = paths.antithetic.as_ref().map_or(0, steps);
    (steps(&paths.fine) + c + a) as f64
}

fn finish(paths: &CoupledPaths, spec: &PayoffSpec, fine: f64, coarse: f64, degenerate: bool) -> PayoffPair {
    PayoffPair { fine: spec.discount * fine, coarse: spec.discount * coarse, cost_units: path_cost(paths), degenerate }
}

fn dt_of(p: &PathState) -> f64 {
    p.times[1] - p.times[0]
}

pub fn european_pair(paths: &CoupledPaths, spec: &PayoffSpec) -> PayoffPair {
    let i = spec.component;
    let pay = |p: &PathState| spec.terminal.eval(p.component(p.len() - 1, i), spec.strike);
    let mut fine = pay(&paths.fine);
    if let (SchemeMode::Antithetic, Some(a)) = (spec.mode, &paths.antithetic) {
        fine = 0.5 * (fine + pay(a));
    }
    let coarse = paths.coarse.as_ref().map_or(0.0, pay);
    finish(paths, spec, fine, coarse, false)
}

/// Trapezoidal time average of component `i` over `[0, T]`.
pub fn trapezoid_average(p: &PathState, i: usize) -> f64 {
    let t = p.times[p.len() - 1] - p.times[0];
    let mut s = 0.0;
    for n in 0..steps(p) {
        s += 0.5 * (p.times[n + 1] - p.times[n]) * (p.component(n, i) + p.left_limit(n + 1, i));
    }
    s / t
}

/// Average of the Brownian-bridge interpolant: trapezoid plus `g(X_n) I_n` per step.
fn bridge_average(p: &PathState, model: &ModelSpec, integrals: &[f64]) -> f64 {
    let t = p.times[p.len() - 1];
    let dt = dt_of(p);
    let mut s = 0.0;
    for (n, i) in integrals.iter().enumerate().take(steps(p)) {
        let (a, b) = (p.component(n, 0), p.component(n + 1, 0));
        s += 0.5 * dt * (a + b) + model.scalar_coefficients(a).diffusion * i;
    }
    s / t
}

/// Asian payoff `f(T^-1 int X dt)`.
///
/// In Milstein mode the average integrates the Brownian-bridge interpolant of each leg
/// (requires `inc.bridge_integrals`); otherwise it is the trapezoid rule.
pub fn asian_pair(paths: &CoupledPaths, spec: &PayoffSpec, model: &ModelSpec, inc: &IncrementSet) -> PayoffPair {
    let i = spec.component;
    let f = |avg: f64| spec.terminal.eval(avg, spec.strike);
    let bridged = spec.mode == SchemeMode::MilsteinSmoothed && !inc.bridge_integrals.is_empty();
    let (fine, coarse) = if bridged {
        let fine = f(bridge_average(&paths.fine, model, &inc.bridge_integrals));
        let coarse = paths.coarse.as_ref().map_or(0.0, |c| f(bridge_average(c, model, &inc.coarse_bridge_integrals())));
        (fine, coarse)
    } else {
        let mut fine = f(trapezoid_average(&paths.fine, i));
        if let (SchemeMode::Antithetic, Some(a)) = (spec.mode, &paths.antithetic) {
            fine = 0.5 * (fine + f(trapezoid_average(a, i)));
        }
        (fine, paths.coarse.as_ref().map_or(0.0, |c| f(trapezoid_average(c, i))))
    };
    finish(paths, spec, fine, coarse, false)
}

/// Lookback `X_T - min_n (X_n - beta* g(X_n) sqrt(dt))`, each leg with its own step.
pub fn lookback_pair_euler(paths: &CoupledPaths, spec: &PayoffSpec, model: &ModelSpec) -> PayoffPair {
    let pay = |p: &PathState| {
        let sq = dt_of(p).sqrt();
        let min = (0..p.len())
            .map(|n| {
                let x = p.component(n, 0);
                x - BETA_STAR * model.scalar_coefficients(x).diffusion * sq
            })
            .fold(f64::INFINITY, f64::min);
        p.component(p.len() - 1, 0) - min
    };
    let fine = pay(&paths.fine);
    let coarse = paths.coarse.as_ref().map_or(0.0, pay);
    finish(paths, spec, fine, coarse, false)
}

/// Minimum of a Brownian bridge from `a` to `b` with volatility `g` over a step `h`,
/// sampled by inversion with the uniform `u`.
#[inline]
pub fn bridge_minimum(a: f64, b: f64, g: f64, h: f64, u: f64) -> f64 {
    0.5 * (a + b - ((b - a) * (b - a) - 2.0 * g * g * h * u.ln()).sqrt())
}

/// Lookback with bridge-sampled minima. The coarse leg interpolates each step's
/// midpoint and reuses the fine uniforms and `g(X^c_n)` for both halves.
pub fn lookback_pair_milstein(
    paths: &CoupledPaths,
    spec: &PayoffSpec,
    model: &ModelSpec,
    inc: &IncrementSet,
) -> PayoffPair {
    let f = &paths.fine;
    let h = dt_of(f);
    let mut fmin = f64::INFINITY;
    for n in 0..steps(f) {
        let (a, b) = (f.component(n, 0), f.component(n + 1, 0));
        let g = model.scalar_coefficients(a).diffusion;
        fmin = fmin.min(bridge_minimum(a, b, g, h, inc.uniforms[n]));
    }
    let fine = f.component(f.len() - 1, 0) - fmin;
    let coarse = match &paths.coarse {
        None => 0.0,
        Some(c) => {
            let mut cmin = f64::INFINITY;
            for n in 0..steps(c) {
                let (a, b) = (c.component(n, 0), c.component(n + 1, 0));
                let g = model.scalar_coefficients(a).diffusion;
                let mid = bridge_midpoint_scalar(a, b, g, inc.fine[2 * n], inc.coarse[n]);
                cmin = cmin.min(bridge_minimum(a, mid, g, h, inc.uniforms[2 * n])).min(bridge_minimum(
                    mid,
                    b,
                    g,
                    h,
                    inc.uniforms[2 * n + 1],
                ));
            }
            c.component(c.len() - 1, 0) - cmin
        }
    };
    finish(paths, spec, fine, coarse, false)
}

/// Probability that a Brownian bridge from `a` to `b` with volatility `g` over a step
/// `h` goes below `barrier`. The flag reports the zero-volatility limit.
#[inline]
pub fn crossing_probability(a: f64, b: f64, barrier: f64, g: f64, h: f64) -> (f64, bool) {
    let (da, db) = ((a - barrier).max(0.0), (b - barrier).max(0.0));
    if da == 0.0 || db == 0.0 {
        return (1.0, false);
    }
    if g == 0.0 {
        return (0.0, true);
    }
    ((-2.0 * da * db / (g * g * h)).exp(), false)
}

/// Down-and-out barrier smoothed by conditional survival probabilities.
pub fn barrier_pair(paths: &CoupledPaths, spec: &PayoffSpec, model: &ModelSpec, inc: &IncrementSet) -> PayoffPair {
    let b = spec.barrier;
    let f = &paths.fine;
    let h = dt_of(f);
    let mut degenerate = false;
    let mut survive = |x0: f64, x1: f64, g: f64| {
        let (p, deg) = crossing_probability(x0, x1, b, g, h);
        degenerate |= deg;
        1.0 - p
    };
    let mut fs = 1.0;
    for n in 0..steps(f) {
        let (a, c) = (f.component(n, 0), f.component(n + 1, 0));
        fs *= survive(a, c, model.scalar_coefficients(a).diffusion);
    }
    let fine = spec.terminal.eval(f.component(f.len() - 1, 0), spec.strike) * fs;
    let coarse = match &paths.coarse {
        None => 0.0,
        Some(c) => {
            let mut cs = 1.0;
            for n in 0..steps(c) {
                let (x0, x1) = (c.component(n, 0), c.component(n + 1, 0));
                let g = model.scalar_coefficients(x0).diffusion;
                let mid = bridge_midpoint_scalar(x0, x1, g, inc.fine[2 * n], inc.coarse[n]);
                cs *= survive(x0, mid, g) * survive(mid, x1, g);
            }
            spec.terminal.eval(c.component(c.len() - 1, 0), spec.strike) * cs
        }
    };
    finish(paths, spec, fine, coarse, degenerate)
}

/// Barrier options monitored at the grid times.
pub fn barrier_pair_euler(paths: &CoupledPaths, spec: &PayoffSpec) -> PayoffPair {
    let kind = match spec.family {
        PayoffFamily::Barrier(k) => k,
        _ => BarrierKind::DownOut,
    };
    let i = spec.component;
    let pay = |p: &PathState| {
        let xs = p.series(i);
        let hit = match kind {
            BarrierKind::DownOut | BarrierKind::DownIn => xs.iter().any(|&x| x <= spec.barrier),
            BarrierKind::UpOut | BarrierKind::UpIn => xs.iter().any(|&x| x >= spec.barrier),
        };
        let knocked_in = matches!(kind, BarrierKind::DownIn | BarrierKind::UpIn);
        if hit == knocked_in {
            spec.terminal.eval(xs[xs.len() - 1], spec.strike)
        } else {
            0.0
        }
    };
    let fine = pay(&paths.fine);
    let coarse = paths.coarse.as_ref().map_or(0.0, pay);
    finish(paths, spec, fine, coarse, false)
}

/// `P(mean + sd Z > strike)`, with the step-function limit at `sd = 0`.
#[inline]
pub fn conditional_digital(mean: f64, sd: f64, strike: f64) -> (f64, bool) {
    if sd == 0.0 {
        (f64::from(u8::from(mean > strike)), true)
    } else {
        (normal::cdf((mean - strike) / sd), false)
    }
}

/// Digital smoothed by conditional expectation over the last fine step. The coarse leg
/// conditions on the fine increment over the first half of its last step.
pub fn digital_pair(paths: &CoupledPaths, spec: &PayoffSpec, model: &ModelSpec, inc: &IncrementSet) -> PayoffPair {
    let f = &paths.fine;
    let h = dt_of(f);
    let k = spec.strike;
    let x = f.component(f.len() - 2, 0);
    let c = model.scalar_coefficients(x);
    let (fine, mut degenerate) = conditional_digital(x + c.drift * h, c.diffusion.abs() * h.sqrt(), k);
    let coarse = match &paths.coarse {
        None => 0.0,
        Some(cp) => {
            let x = cp.component(cp.len() - 2, 0);
            let c = model.scalar_coefficients(x);
            let dw = inc.fine[inc.steps() - 2];
            let (v, deg) =
                conditional_digital(x + c.drift * 2.0 * h + c.diffusion * dw, c.diffusion.abs() * h.sqrt(), k);
            degenerate |= deg;
            v
        }
    };
    finish(paths, spec, fine, coarse, degenerate)
}

pub fn digital_pair_euler(paths: &CoupledPaths, spec: &PayoffSpec) -> PayoffPair {
    let i = spec.component;
    let pay = |p: &PathState| f64::from(u8::from(p.component(p.len() - 1, i) > spec.strike));
    let fine = pay(&paths.fine);
    let coarse = paths.coarse.as_ref().map_or(0.0, pay);
    finish(paths, spec, fine, coarse, false)
}

/// Dispatches to the pair estimator for `spec.family` and `spec.mode`.
pub fn payoff_pair(paths: &CoupledPaths, spec: &PayoffSpec, model: &ModelSpec, inc: &IncrementSet) -> PayoffPair {
    use PayoffFamily::*;
    use SchemeMode::*;
    match (spec.family, spec.mode) {
        (European, _) => european_pair(paths, spec),
        (Asian, _) => asian_pair(paths, spec, model, inc),
        (Lookback, MilsteinSmoothed) => lookback_pair_milstein(paths, spec, model, inc),
        (Lookback, _) => lookback_pair_euler(paths, spec, model),
        (Barrier(BarrierKind::DownOut), MilsteinSmoothed) => barrier_pair(paths, spec, model, inc),
        (Barrier(_), _) => barrier_pair_euler(paths, spec),
        (Digital, MilsteinSmoothed) => digital_pair(paths, spec, model, inc),
        (Digital, _) => digital_pair_euler(paths, spec),
    }
}
