//! Euler-Maruyama and Milstein steppers on coupled fine/coarse grids.

use thiserror::Error;

use crate::sde::{antithetic_swap, IncrementSet, LevelGrid, ModelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("non-finite state after step {step}")]
    NonFinite { step: usize },
    #[error("{got} increments do not match a grid of {expected} steps")]
    Mismatch { expected: usize, got: usize },
    #[error("coarse path requested at level 0")]
    NoCoarseLevel,
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("time {0} outside the path")]
    TimeOutOfRange(f64),
    #[error("jump intensity {rate} exceeds its declared bound {bound}")]
    IntensityBound { rate: f64, bound: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Milstein,
}

/// A discrete trajectory. `values` is flat with `dim` entries per time.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub dim: usize,
    /// Pre-jump values, one per time (jump-adapted paths only).
    pub left_limits: Option<Vec<f64>>,
}

impl PathState {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    pub fn component(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.dim + i]
    }

    /// Values of one component along the path.
    pub fn series(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|n| self.component(n, i)).collect()
    }

    /// Left limit of component `i` at index `n`; equal to the value without jumps.
    pub fn left_limit(&self, n: usize, i: usize) -> f64 {
        match &self.left_limits {
            Some(l) => l[n * self.dim + i],
            None => self.component(n, i),
        }
    }
}

/// Fine, antithetic and coarse trajectories sharing one increment set.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPaths {
    pub fine: PathState,
    pub coarse: Option<PathState>,
    pub antithetic: Option<PathState>,
}

/// Steps a path on a uniform grid with the given flat increments.
pub fn integrate(model: &ModelSpec, scheme: Scheme, dt: f64, increments: &[f64]) -> Result<PathState, SchemeError> {
    let d = model.dimension();
    let m = model.driver_dimension();
    let steps = increments.len() / m;
    let mut values = Vec::with_capacity((steps + 1) * d);
    values.extend_from_slice(model.x0());
    if model.is_scalar() {
        let mut x = model.x0()[0];
        for (n, &dw) in increments.iter().enumerate() {
            let c = model.scalar_coefficients(x);
            x += c.drift * dt + c.diffusion * dw;
            if scheme == Scheme::Milstein {
                x += c.milstein * (dw * dw - dt);
            }
            if !x.is_finite() {
                return Err(SchemeError::NonFinite { step: n + 1 });
            }
            values.push(x);
        }
    } else {
        let omega = model.correlation();
        let mut f = vec![0.0; d];
        let mut g = vec![0.0; d * m];
        let mut h = vec![0.0; d * m * m];
        let mut x = model.x0().to_vec();
        for n in 0..steps {
            let dw = &increments[n * m..(n + 1) * m];
            model.drift(&x, &mut f);
            model.diffusion(&x, &mut g);
            if scheme == Scheme::Milstein {
                model.milstein(&x, &mut h);
            }
            for i in 0..d {
                let mut dx = f[i] * dt;
                for j in 0..m {
                    dx += g[i * m + j] * dw[j];
                }
                if scheme == Scheme::Milstein {
                    for j in 0..m {
                        for k in 0..m {
                            let hijk = h[(i * m + j) * m + k];
                            if hijk != 0.0 {
                                dx += hijk * (dw[j] * dw[k] - omega[j * m + k] * dt);
                            }
                        }
                    }
                }
                x[i] += dx;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SchemeError::NonFinite { step: n + 1 });
            }
            values.extend_from_slice(&x);
        }
    }
    Ok(PathState { times: (0..=steps).map(|n| n as f64 * dt).collect(), values, dim: d, left_limits: None })
}

fn check(grid: &LevelGrid, inc: &IncrementSet) -> Result<(), SchemeError> {
    if inc.steps() != grid.steps {
        return Err(SchemeError::Mismatch { expected: grid.steps, got: inc.steps() });
    }
    Ok(())
}

pub fn euler_path(model: &ModelSpec, grid: &LevelGrid, inc: &IncrementSet) -> Result<PathState, SchemeError> {
    check(grid, inc)?;
    integrate(model, Scheme::Euler, grid.dt, &inc.fine)
}

/// Milstein path with Lévy areas omitted.
pub fn milstein_path(model: &ModelSpec, grid: &LevelGrid, inc: &IncrementSet) -> Result<PathState, SchemeError> {
    check(grid, inc)?;
    integrate(model, Scheme::Milstein, grid.dt, &inc.fine)
}

/// Fine path on `grid` and, for `level >= 1`, the coarse path on the pairwise-summed increments.
pub fn coupled_paths(
    model: &ModelSpec,
    scheme: Scheme,
    grid: &LevelGrid,
    inc: &IncrementSet,
) -> Result<CoupledPaths, SchemeError> {
    check(grid, inc)?;
    let fine = integrate(model, scheme, grid.dt, &inc.fine)?;
    let coarse = match grid.level {
        0 => None,
        _ => Some(integrate(model, scheme, 2.0 * grid.dt, &inc.coarse)?),
    };
    Ok(CoupledPaths { fine, coarse, antithetic: None })
}

/// Fine, antithetic (swapped increments) and coarse Milstein paths.
pub fn antithetic_triple(model: &ModelSpec, grid: &LevelGrid, inc: &IncrementSet) -> Result<CoupledPaths, SchemeError> {
    if grid.level == 0 {
        return Err(SchemeError::NoCoarseLevel);
    }
    check(grid, inc)?;
    let swapped = antithetic_swap(inc).map_err(|_| SchemeError::Mismatch { expected: grid.steps, got: inc.steps() })?;
    Ok(CoupledPaths {
        fine: integrate(model, Scheme::Milstein, grid.dt, &inc.fine)?,
        antithetic: Some(integrate(model, Scheme::Milstein, grid.dt, &swapped.fine)?),
        coarse: Some(integrate(model, Scheme::Milstein, 2.0 * grid.dt, &inc.coarse)?),
    })
}

/// Returns true iff `|h_ijk - h_ikj| <= tol` at every probe.
///
/// # Panics
/// If `probes` is empty.
pub fn is_commutative(model: &ModelSpec, probes: &[Vec<f64>], tol: f64) -> bool {
    assert!(!probes.is_empty(), "at least one probe point is required");
    let (d, m) = (model.dimension(), model.driver_dimension());
    let mut h = vec![0.0; d * m * m];
    probes.iter().all(|x| {
        model.milstein(x, &mut h);
        (0..d).all(|i| (0..m).all(|j| (0..m).all(|k| (h[(i * m + j) * m + k] - h[(i * m + k) * m + j]).abs() <= tol)))
    })
}

/// Brownian-bridge value of the coarse path at the midpoint of coarse step `n`, using the
/// fine increment over the first half of that step.
pub fn brownian_bridge_midpoint(
    coarse: &PathState,
    model: &ModelSpec,
    inc: &IncrementSet,
    n: usize,
) -> Result<Vec<f64>, SchemeError> {
    let steps = coarse.len().saturating_sub(1);
    if n >= steps || 2 * n + 1 >= inc.steps() {
        return Err(SchemeError::OutOfRange { index: n, len: steps });
    }
    let (d, m) = (model.dimension(), model.driver_dimension());
    let xn = coarse.value(n);
    let xn1 = coarse.value(n + 1);
    let mut g = vec![0.0; d * m];
    model.diffusion(xn, &mut g);
    let dw_half = inc.fine_step(2 * n);
    let dw = inc.coarse_step(n);
    Ok((0..d)
        .map(|i| {
            let bridge: f64 = (0..m).map(|j| g[i * m + j] * (dw_half[j] - 0.5 * dw[j])).sum();
            xn[i] + 0.5 * (xn1[i] - xn[i]) + bridge
        })
        .collect())
}

/// Scalar bridge midpoint `x_n + (x_n1 - x_n)/2 + g (dw_half - dw/2)`.
#[inline]
pub fn bridge_midpoint_scalar(xn: f64, xn1: f64, g: f64, dw_half: f64, dw: f64) -> f64 {
    xn + 0.5 * (xn1 - xn) + g * (dw_half - 0.5 * dw)
}

/// Linear interpolation of a path at time `t`.
pub fn piecewise_linear_interpolant(path: &PathState, t: f64) -> Result<Vec<f64>, SchemeError> {
    let times = &path.times;
    let (first, last) = (times[0], times[times.len() - 1]);
    if !(t >= first && t <= last) {
        return Err(SchemeError::TimeOutOfRange(t));
    }
    let idx = times.partition_point(|&s| s <= t);
    if idx >= times.len() {
        return Ok(path.last().to_vec());
    }
    let n = idx - 1;
    let lambda = (t - times[n]) / (times[n + 1] - times[n]);
    let (a, b) = (path.value(n), path.value(n + 1));
    Ok(a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{sample_increments, Coefficients, StreamKey};
    use std::sync::Arc;

    fn gbm() -> ModelSpec {
        ModelSpec::gbm(0.05, 0.2, 1.0).unwrap()
    }

    fn one_step(model: &ModelSpec, scheme: Scheme, dt: f64, dw: f64) -> f64 {
        integrate(model, scheme, dt, &[dw]).unwrap().last()[0]
    }

    #[derive(Debug)]
    struct Additive;
    impl Coefficients for Additive {
        fn drift(&self, _x: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
        fn milstein(&self, _x: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    #[test]
    fn euler_examples() {
        assert!((one_step(&gbm(), Scheme::Euler, 1.0, 0.0) - 1.05).abs() < 1e-15);
        let add = ModelSpec::scalar("additive", 0.0, Arc::new(Additive));
        assert!((one_step(&add, Scheme::Euler, 0.5, 0.3) - 0.3).abs() < 1e-15);
        assert!((one_step(&gbm(), Scheme::Euler, 0.25, 0.1) - 1.0325).abs() < 1e-14);
    }

    #[test]
    fn milstein_examples() {
        assert!((one_step(&gbm(), Scheme::Milstein, 0.25, 0.1) - 1.0277).abs() < 1e-14);
        assert_eq!(one_step(&gbm(), Scheme::Milstein, 0.25, 0.5), one_step(&gbm(), Scheme::Euler, 0.25, 0.5));
        let add = ModelSpec::scalar("additive", 0.0, Arc::new(Additive));
        for dw in [-1.0, 0.2, 3.0] {
            assert_eq!(one_step(&add, Scheme::Milstein, 0.1, dw), one_step(&add, Scheme::Euler, 0.1, dw));
        }
    }

    #[test]
    fn non_finite_is_reported() {
        let model = ModelSpec::gbm(0.0, 1.0, 1.0).unwrap();
        let inc = IncrementSet::from_fine(1, 1.0, vec![1e200, 1e200, 1e200]);
        let err = integrate(&model, Scheme::Euler, 1.0, &inc.fine).unwrap_err();
        assert_eq!(err, SchemeError::NonFinite { step: 2 });
    }

    #[derive(Debug)]
    struct DiagonalModel;
    impl Coefficients for DiagonalModel {
        fn drift(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn diffusion(&self, x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[x[0].sin(), 0.0, 0.0, x[1] * x[1]]);
        }
        fn milstein(&self, x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
            out[0] = 0.5 * x[0].sin() * x[0].cos();
            out[7] = 0.5 * x[1] * x[1] * 2.0 * x[1];
        }
    }

    #[test]
    fn commutativity() {
        let probes = vec![vec![0.3, 0.4], vec![1.0, -2.0]];
        assert!(is_commutative(&gbm(), &[vec![1.0]], 0.0));
        assert!(!is_commutative(&ModelSpec::clark_cameron([0.0, 0.0]), &probes, 1e-12));
        let diag =
            ModelSpec::new("diag", vec![0.0, 0.0], 2, vec![1.0, 0.0, 0.0, 1.0], Arc::new(DiagonalModel)).unwrap();
        assert!(is_commutative(&diag, &probes, 1e-12));
    }

    #[test]
    fn clark_cameron_antithetic_average_is_coarse() {
        let model = ModelSpec::clark_cameron([1.0, 1.0]);
        for level in 1..7 {
            let grid = LevelGrid::new(level, 1.0);
            for i in 0..200 {
                let inc = sample_increments(&mut StreamKey::new(5, 0, level, i).stream(), &grid, &model);
                let p = antithetic_triple(&model, &grid, &inc).unwrap();
                let (f, a, c) = (&p.fine, p.antithetic.as_ref().unwrap(), p.coarse.as_ref().unwrap());
                for n in 0..c.len() {
                    let x1 = c.component(n, 0);
                    assert!((f.component(2 * n, 0) - x1).abs() <= 1e-12 * (1.0 + x1.abs()));
                    assert!((a.component(2 * n, 0) - x1).abs() <= 1e-12 * (1.0 + x1.abs()));
                    let avg = 0.5 * (f.component(2 * n, 1) + a.component(2 * n, 1));
                    let x2 = c.component(n, 1);
                    assert!((avg - x2).abs() <= 1e-12 * (1.0 + x2.abs()));
                }
            }
        }
    }

    #[test]
    fn zero_diffusion_triple_is_deterministic() {
        let model = ModelSpec::gbm(0.05, 1e-300, 1.0).unwrap();
        let grid = LevelGrid::new(3, 1.0);
        let inc = sample_increments(&mut StreamKey::new(1, 0, 3, 0).stream(), &grid, &model);
        let p = antithetic_triple(&model, &grid, &inc).unwrap();
        let expect_f = 1.05f64.powi(0) * (1.0 + 0.05 * 0.125f64).powi(8);
        let expect_c = (1.0 + 0.05 * 0.25f64).powi(4);
        assert!((p.fine.last()[0] - expect_f).abs() < 1e-14);
        assert_eq!(p.fine.last(), p.antithetic.unwrap().last());
        assert!((p.coarse.unwrap().last()[0] - expect_c).abs() < 1e-14);
    }

    #[test]
    fn bridge_midpoint_examples() {
        let model = ModelSpec::scalar("additive", 1.0, Arc::new(Additive));
        let coarse = PathState { times: vec![0.0, 1.0], values: vec![1.0, 1.2], dim: 1, left_limits: None };
        let inc = IncrementSet::from_fine(1, 0.5, vec![0.3, 0.1]);
        let mid = brownian_bridge_midpoint(&coarse, &model, &inc, 0).unwrap()[0];
        assert!((mid - 1.2).abs() < 1e-14);
        let sym = IncrementSet::from_fine(1, 0.5, vec![0.2, 0.2]);
        assert!((brownian_bridge_midpoint(&coarse, &model, &sym, 0).unwrap()[0] - 1.1).abs() < 1e-14);
        assert!((bridge_midpoint_scalar(1.0, 1.2, 0.5, 0.3, 0.4) - 1.15).abs() < 1e-14);
        assert!((bridge_midpoint_scalar(1.0, 1.2, 0.0, 0.3, 0.4) - 1.1).abs() < 1e-14);
        assert!(brownian_bridge_midpoint(&coarse, &model, &inc, 1).is_err());
    }

    #[test]
    fn interpolant_examples() {
        let path = PathState { times: vec![0.0, 0.25, 0.5], values: vec![1.0, 2.0, 4.0], dim: 1, left_limits: None };
        assert_eq!(piecewise_linear_interpolant(&path, 0.25).unwrap(), vec![2.0]);
        assert!((piecewise_linear_interpolant(&path, 0.125).unwrap()[0] - 1.5).abs() < 1e-15);
        assert!((piecewise_linear_interpolant(&path, 0.3).unwrap()[0] - 2.4).abs() < 1e-14);
        assert_eq!(piecewise_linear_interpolant(&path, 0.5).unwrap(), vec![4.0]);
        assert!(piecewise_linear_interpolant(&path, 0.6).is_err());
        assert!(piecewise_linear_interpolant(&path, -0.1).is_err());
    }
}
