//! Jump-diffusion paths on jump-adapted grids.
//!
//! Jump times (or thinning candidates) are drawn once per sample and shared by the fine
//! and coarse legs. The fine grid is the uniform fine grid merged with the jump times;
//! the coarse grid is the same with the odd fine nodes removed, so each coarse interval
//! contains at most one fine node in its interior.

use std::fmt;
use std::sync::Arc;

use crate::payoffs::{
    bridge_minimum, conditional_digital, crossing_probability, trapezoid_average, BarrierKind, PayoffFamily,
    PayoffPair, PayoffSpec,
};
use crate::schemes::{CoupledPaths, PathState, Scheme, SchemeError};
use crate::sde::{IncrementSet, LevelGrid, ModelSpec, SampleStream};

/// Jump intensity of the driving Poisson process.
#[derive(Clone)]
pub enum Intensity {
    Constant(f64),
    /// `rate(x)` evaluated at the left limit; must never exceed `bound`.
    StateDependent {
        rate: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        bound: f64,
    },
}

impl fmt::Debug for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(l) => f.debug_tuple("Constant").field(l).finish(),
            Self::StateDependent { bound, .. } => f.debug_struct("StateDependent").field("bound", bound).finish(),
        }
    }
}

/// Law of the jump multiplier `Y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarkLaw {
    /// `log Y ~ N(mu, sigma^2)`.
    LogNormal { mu: f64, sigma: f64 },
}

impl MarkLaw {
    pub fn sample(&self, stream: &mut SampleStream) -> f64 {
        match *self {
            Self::LogNormal { mu, sigma } => (mu + sigma * stream.normal()).exp(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        }
    }
}

/// Jump coefficient `c(x)`: a jump maps `x` to `x + c(x) (Y - 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JumpCoefficient {
    Proportional(f64),
    Constant(f64),
}

impl JumpCoefficient {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Proportional(k) => k * x,
            Self::Constant(k) => k,
        }
    }

    pub fn apply(&self, x: f64, mark: f64) -> f64 {
        x + self.eval(x) * (mark - 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct JumpSpec {
    pub intensity: Intensity,
    pub marks: MarkLaw,
    pub coefficient: JumpCoefficient,
}

/// Poisson arrival times on (0, T) by exponential inter-arrival sampling.
pub fn sample_jump_times(stream: &mut SampleStream, rate: f64, horizon: f64) -> Vec<f64> {
    let mut times = Vec::new();
    if !(rate > 0.0) {
        return times;
    }
    let mut t = 0.0;
    loop {
        t += stream.exponential(rate);
        if t >= horizon {
            return times;
        }
        if times.last().is_none_or(|&last| t > last) {
            times.push(t);
        }
    }
}

/// Sorted union of the uniform grid times and `jumps`, without duplicates.
pub fn jump_adapted_grid(grid: &LevelGrid, jumps: &[f64]) -> Vec<f64> {
    let mut times: Vec<f64> = (0..=grid.steps).map(|n| grid.time(n)).collect();
    times.extend(jumps.iter().copied().filter(|&t| t > 0.0 && t <= grid.horizon));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// One interval of a jump-adapted grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub dt: f64,
    pub dw: f64,
    /// Bridge-minimum uniform.
    pub uniform: f64,
    /// Jump (or candidate) index at `end`.
    pub jump: Option<usize>,
    /// Removed fine node inside a coarse interval: time, increment from `start`,
    /// and the uniforms of the two fine halves.
    pub midpoint: Option<Midpoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Midpoint {
    pub time: f64,
    pub dw_first: f64,
    pub uniforms: [f64; 2],
}

/// Fine and coarse jump-adapted skeletons of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeletons {
    pub fine: Vec<Interval>,
    pub coarse: Option<Vec<Interval>>,
}

/// Splits each fine step at the jump times by Brownian-bridge sampling and, for
/// `level >= 1`, merges pairs across the odd fine nodes to form the coarse skeleton.
pub fn build_skeletons(grid: &LevelGrid, inc: &IncrementSet) -> Skeletons {
    assert_eq!(inc.m, 1, "jump-adapted paths need a scalar driver");
    let mut fine = Vec::with_capacity(grid.steps + inc.jump_times.len());
    // (interval index, is the end an odd uniform node without a jump)
    let mut odd_end = Vec::with_capacity(fine.capacity());
    let mut j = 0;
    for n in 0..grid.steps {
        let (t0, t1) = (grid.time(n), grid.time(n + 1));
        let mut left = t0;
        let mut rest = inc.fine[n];
        let mut uniform = inc.uniforms[n];
        let mut start_jump = None;
        while j < inc.jump_times.len() && inc.jump_times[j] < t1 {
            let tau = inc.jump_times[j];
            let (a, b) = (tau - left, t1 - tau);
            let piece = a / (a + b) * rest + (a * b / (a + b)).sqrt() * inc.bridge_normals[j];
            rest -= piece;
            fine.push(Interval { start: left, end: tau, dt: a, dw: piece, uniform, jump: Some(j), midpoint: None });
            odd_end.push(false);
            left = tau;
            uniform = inc.bridge_uniforms[j];
            start_jump = Some(j);
            j += 1;
        }
        let at_end = (j < inc.jump_times.len() && inc.jump_times[j] == t1).then(|| {
            j += 1;
            j - 1
        });
        let dt = if start_jump.is_none() { grid.dt } else { t1 - left };
        fine.push(Interval { start: left, end: t1, dt, dw: rest, uniform, jump: at_end, midpoint: None });
        odd_end.push(n % 2 == 0 && at_end.is_none() && n + 1 < grid.steps);
    }
    let coarse = (grid.level > 0).then(|| {
        let mut coarse = Vec::with_capacity(fine.len());
        let mut k = 0;
        while k < fine.len() {
            let a = fine[k];
            if odd_end[k] {
                let b = fine[k + 1];
                let full = a.start == b.end - 2.0 * grid.dt && a.dt == grid.dt && b.dt == grid.dt;
                coarse.push(Interval {
                    start: a.start,
                    end: b.end,
                    dt: if full { 2.0 * grid.dt } else { b.end - a.start },
                    dw: a.dw + b.dw,
                    uniform: a.uniform,
                    jump: b.jump,
                    midpoint: Some(Midpoint { time: a.end, dw_first: a.dw, uniforms: [a.uniform, b.uniform] }),
                });
                k += 2;
            } else {
                coarse.push(a);
                k += 1;
            }
        }
        coarse
    });
    Skeletons { fine, coarse }
}

/// How candidate jumps are accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acceptance {
    /// Every jump is real (constant intensity).
    All,
    /// Accept when the shared uniform is below each leg's own `rate(x-)/bound`.
    Thinning,
    /// Accept both legs when the shared uniform is below 1/2 and reweight each leg by
    /// its likelihood ratio `2p` or `2(1-p)`.
    MeasureChange,
}

fn accept(spec: &JumpSpec, mode: Acceptance, x_left: f64, u: f64) -> Result<(bool, f64), SchemeError> {
    let p = match &spec.intensity {
        Intensity::Constant(_) => 1.0,
        Intensity::StateDependent { rate, bound } => {
            let l = rate(x_left);
            if !(l >= 0.0 && l <= bound * (1.0 + 1e-12)) {
                return Err(SchemeError::IntensityBound { rate: l, bound: *bound });
            }
            (l / bound).min(1.0)
        }
    };
    Ok(match mode {
        Acceptance::All => (true, 1.0),
        Acceptance::Thinning => (u < p, 1.0),
        Acceptance::MeasureChange if u < 0.5 => (true, 2.0 * p),
        Acceptance::MeasureChange => (false, 2.0 * (1.0 - p)),
    })
}

/// Integrates one leg along a skeleton. Returns the path (with left limits), the
/// product of likelihood-ratio weights and the number of accepted jumps.
pub fn integrate_skeleton(
    model: &ModelSpec,
    scheme: Scheme,
    skeleton: &[Interval],
    inc: &IncrementSet,
    mode: Acceptance,
) -> Result<(PathState, f64, usize), SchemeError> {
    let spec = model.jumps();
    let mut x = model.x0()[0];
    let mut times = Vec::with_capacity(skeleton.len() + 1);
    let mut values = Vec::with_capacity(skeleton.len() + 1);
    let mut left = Vec::with_capacity(skeleton.len() + 1);
    times.push(0.0);
    values.push(x);
    left.push(x);
    let mut weight = 1.0;
    let mut accepted = 0;
    for (n, iv) in skeleton.iter().enumerate() {
        let c = model.scalar_coefficients(x);
        x += c.drift * iv.dt + c.diffusion * iv.dw;
        if scheme == Scheme::Milstein {
            x += c.milstein * (iv.dw * iv.dw - iv.dt);
        }
        left.push(x);
        if let (Some(j), Some(spec)) = (iv.jump, spec) {
            let (take, w) = accept(spec, mode, x, inc.jump_uniforms[j])?;
            weight *= w;
            if take {
                x = spec.coefficient.apply(x, inc.jump_marks[j]);
                accepted += 1;
            }
        }
        if !x.is_finite() {
            return Err(SchemeError::NonFinite { step: n + 1 });
        }
        times.push(iv.end);
        values.push(x);
    }
    Ok((PathState { times, values, dim: 1, left_limits: Some(left) }, weight, accepted))
}

/// Coupled jump-adapted paths of one sample with their likelihood-ratio weights.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpPaths {
    pub paths: CoupledPaths,
    pub skeletons: Skeletons,
    pub fine_weight: f64,
    pub coarse_weight: f64,
    pub fine_jumps: usize,
    pub coarse_jumps: usize,
}

/// Fine and coarse jump-adapted paths. With constant intensity every jump is applied
/// to both legs at the same times with the same marks.
pub fn jump_adapted_pair(
    model: &ModelSpec,
    scheme: Scheme,
    grid: &LevelGrid,
    inc: &IncrementSet,
    mode: Acceptance,
) -> Result<JumpPaths, SchemeError> {
    if inc.steps() != grid.steps {
        return Err(SchemeError::Mismatch { expected: grid.steps, got: inc.steps() });
    }
    let skeletons = build_skeletons(grid, inc);
    let (fine, fine_weight, fine_jumps) = integrate_skeleton(model, scheme, &skeletons.fine, inc, mode)?;
    let (coarse, coarse_weight, coarse_jumps) = match &skeletons.coarse {
        Some(s) => {
            let (p, w, k) = integrate_skeleton(model, scheme, s, inc, mode)?;
            (Some(p), w, k)
        }
        None => (None, 0.0, 0),
    };
    Ok(JumpPaths {
        paths: CoupledPaths { fine, coarse, antithetic: None },
        skeletons,
        fine_weight,
        coarse_weight,
        fine_jumps,
        coarse_jumps,
    })
}

/// Constant-rate jump-adapted Milstein paths.
pub fn jump_adapted_milstein_pair(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
) -> Result<CoupledPaths, SchemeError> {
    Ok(jump_adapted_pair(model, Scheme::Milstein, grid, inc, Acceptance::All)?.paths)
}

/// Thinned paths for a state-dependent intensity, with or without the change of
/// measure, evaluated with `payoff`. Each leg is multiplied by its weight product.
pub fn thinned_pair_with_measure_change(
    model: &ModelSpec,
    grid: &LevelGrid,
    inc: &IncrementSet,
    spec: &PayoffSpec,
    measure_change: bool,
) -> Result<PayoffPair, SchemeError> {
    let mode = if measure_change { Acceptance::MeasureChange } else { Acceptance::Thinning };
    let jp = jump_adapted_pair(model, Scheme::Milstein, grid, inc, mode)?;
    Ok(jump_payoff_pair(&jp, spec, model))
}

/// Interpolated value at the removed fine node of a coarse interval, by Brownian-bridge
/// interpolation between the interval's start value and the left limit at its end.
fn coarse_midpoint(iv: &Interval, mid: &Midpoint, a: f64, b_left: f64, g: f64) -> f64 {
    let lambda = (mid.time - iv.start) / (iv.end - iv.start);
    a + lambda * (b_left - a) + g * (mid.dw_first - lambda * iv.dw)
}

/// Runs `visit(a, b, g, dt, u)` over every bridge segment of a leg: each fine interval,
/// or each coarse interval split at its interpolated midpoint.
fn for_each_segment(
    model: &ModelSpec,
    path: &PathState,
    skeleton: &[Interval],
    mut visit: impl FnMut(f64, f64, f64, f64, f64),
) {
    for (n, iv) in skeleton.iter().enumerate() {
        let a = path.component(n, 0);
        let b = path.left_limit(n + 1, 0);
        let g = model.scalar_coefficients(a).diffusion;
        match &iv.midpoint {
            None => visit(a, b, g, iv.dt, iv.uniform),
            Some(mid) => {
                let x = coarse_midpoint(iv, mid, a, b, g);
                visit(a, x, g, mid.time - iv.start, mid.uniforms[0]);
                visit(x, b, g, iv.end - mid.time, mid.uniforms[1]);
            }
        }
    }
}

fn leg_value(model: &ModelSpec, spec: &PayoffSpec, path: &PathState, skeleton: &[Interval]) -> (f64, bool) {
    let last = path.component(path.len() - 1, 0);
    match spec.family {
        PayoffFamily::European => (spec.terminal.eval(last, spec.strike), false),
        PayoffFamily::Asian => (spec.terminal.eval(trapezoid_average(path, 0), spec.strike), false),
        PayoffFamily::Lookback => {
            let mut min = f64::INFINITY;
            for_each_segment(model, path, skeleton, |a, b, g, h, u| min = min.min(bridge_minimum(a, b, g, h, u)));
            (last - min.min(last), false)
        }
        PayoffFamily::Barrier(_) => {
            let mut survive = 1.0;
            let mut degenerate = false;
            for_each_segment(model, path, skeleton, |a, b, g, h, _| {
                let (p, d) = crossing_probability(a, b, spec.barrier, g, h);
                degenerate |= d;
                survive *= 1.0 - p;
            });
            (spec.terminal.eval(last, spec.strike) * survive, degenerate)
        }
        PayoffFamily::Digital => {
            let n = skeleton.len() - 1;
            let iv = &skeleton[n];
            let x = path.component(n, 0);
            let c = model.scalar_coefficients(x);
            match &iv.midpoint {
                None => conditional_digital(x + c.drift * iv.dt, c.diffusion.abs() * iv.dt.sqrt(), spec.strike),
                Some(mid) => conditional_digital(
                    x + c.drift * iv.dt + c.diffusion * mid.dw_first,
                    c.diffusion.abs() * (iv.end - mid.time).sqrt(),
                    spec.strike,
                ),
            }
        }
    }
}

/// Payoff pair on jump-adapted paths. Lookback and barrier minima use left limits at
/// the interval ends; the coarse leg interpolates the removed fine node over its
/// jump-adapted interval and reuses the fine uniforms. The digital conditions on the
/// last diffusion interval, and on the coarse leg also on the increment up to the
/// removed fine node when that interval contains one.
pub fn jump_payoff_pair(jp: &JumpPaths, spec: &PayoffSpec, model: &ModelSpec) -> PayoffPair {
    debug_assert!(!matches!(spec.family, PayoffFamily::Barrier(k) if k != BarrierKind::DownOut));
    let (fine, mut degenerate) = leg_value(model, spec, &jp.paths.fine, &jp.skeletons.fine);
    let coarse = match (&jp.paths.coarse, &jp.skeletons.coarse) {
        (Some(p), Some(s)) => {
            let (v, d) = leg_value(model, spec, p, s);
            degenerate |= d;
            v * jp.coarse_weight
        }
        _ => 0.0,
    };
    let cost = jp.skeletons.fine.len() + jp.skeletons.coarse.as_ref().map_or(0, Vec::len);
    PayoffPair {
        fine: spec.discount * fine * jp.fine_weight,
        coarse: spec.discount * coarse,
        cost_units: cost as f64,
        degenerate,
    }
}
