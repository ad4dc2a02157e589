use thiserror::Error;

use super::model::ModelSpec;
use super::rng::{SampleStream, StreamKey};
use crate::jumps::{sample_jump_times, Intensity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncrementError {
    #[error("antithetic swap needs an even number of fine steps, got {0}")]
    OddStepCount(usize),
}

/// Uniform time grid of one level: `2^level` steps of `horizon / 2^level`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelGrid {
    pub level: u32,
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
}

impl LevelGrid {
    /// # Panics
    /// If `horizon` is not positive and finite, or `level > 40`.
    pub fn new(level: u32, horizon: f64) -> Self {
        assert!(horizon > 0.0 && horizon.is_finite(), "horizon must be positive, got {horizon}");
        assert!(level <= 40, "level {level} is too deep");
        // Halving is exact in binary floating point, so steps * dt == horizon.
        let mut dt = horizon;
        for _ in 0..level {
            dt *= 0.5;
        }
        Self { level, horizon, dt, steps: 1usize << level }
    }

    /// The grid one level down, or `None` at level 0.
    pub fn coarser(&self) -> Option<Self> {
        (self.level > 0).then(|| Self::new(self.level - 1, self.horizon))
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// All randomness consumed by one multilevel sample.
///
/// Increments are stored flat: step `n`, driver `j` is at `n * m + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementSet {
    pub m: usize,
    pub dt: f64,
    pub fine: Vec<f64>,
    /// Pairwise sums of `fine`; empty when the fine grid has a single step.
    pub coarse: Vec<f64>,
    /// One uniform on (0, 1) per fine step, for bridge minima.
    pub uniforms: Vec<f64>,
    /// Per fine step, the integral of the Brownian bridge over the step (scalar drivers).
    /// Only drawn on request.
    pub bridge_integrals: Vec<f64>,
    /// Sorted jump (or thinning candidate) times in (0, T).
    pub jump_times: Vec<f64>,
    pub jump_marks: Vec<f64>,
    /// Acceptance uniforms for thinning candidates.
    pub jump_uniforms: Vec<f64>,
    /// Standard normals splitting a step's increment at each jump time.
    pub bridge_normals: Vec<f64>,
    /// Bridge-minimum uniforms for the sub-interval that starts at each jump.
    pub bridge_uniforms: Vec<f64>,
    pub key: Option<StreamKey>,
}

impl IncrementSet {
    /// Builds a set from given fine increments with `m` drivers. Uniforms are set to 1/2.
    pub fn from_fine(m: usize, dt: f64, fine: Vec<f64>) -> Self {
        assert!(m > 0 && fine.len().is_multiple_of(m), "increment count must be a multiple of m");
        let steps = fine.len() / m;
        let coarse = pair_sums(&fine, m);
        Self {
            m,
            dt,
            fine,
            coarse,
            uniforms: vec![0.5; steps],
            bridge_integrals: Vec::new(),
            jump_times: Vec::new(),
            jump_marks: Vec::new(),
            jump_uniforms: Vec::new(),
            bridge_normals: Vec::new(),
            bridge_uniforms: Vec::new(),
            key: None,
        }
    }

    pub fn steps(&self) -> usize {
        self.fine.len() / self.m
    }

    pub fn fine_step(&self, n: usize) -> &[f64] {
        &self.fine[n * self.m..(n + 1) * self.m]
    }

    pub fn coarse_step(&self, n: usize) -> &[f64] {
        &self.coarse[n * self.m..(n + 1) * self.m]
    }

    /// Bridge integrals of the coarse steps, derived from the fine ones.
    pub fn coarse_bridge_integrals(&self) -> Vec<f64> {
        let h = self.dt;
        self.bridge_integrals
            .chunks_exact(2)
            .enumerate()
            .map(|(n, i)| i[0] + i[1] + 0.5 * h * (self.fine[2 * n * self.m] - self.fine[(2 * n + 1) * self.m]))
            .collect()
    }

    /// Draws `int (w(t) - w(t_n) - (t - t_n)/dt * dw_n) dt` for every fine step of the
    /// first driver. These are independent of the increments with variance `dt^3 / 12`.
    pub fn draw_bridge_integrals(&mut self, stream: &mut SampleStream) {
        let sd = (self.dt * self.dt * self.dt / 12.0).sqrt();
        self.bridge_integrals = (0..self.steps()).map(|_| sd * stream.normal()).collect();
    }
}

fn pair_sums(fine: &[f64], m: usize) -> Vec<f64> {
    let steps = fine.len() / m;
    if steps < 2 {
        return Vec::new();
    }
    let mut coarse = vec![0.0; (steps / 2) * m];
    for n in 0..steps / 2 {
        for j in 0..m {
            coarse[n * m + j] = fine[2 * n * m + j] + fine[(2 * n + 1) * m + j];
        }
    }
    coarse
}

/// Draws the increments, uniforms and (for jump models) jump data of one sample.
///
/// Draw order: `steps * m` normals, `steps` uniforms, then jump times followed by
/// mark, acceptance uniform, bridge normal and bridge uniform for each jump.
pub fn sample_increments(stream: &mut SampleStream, grid: &LevelGrid, model: &ModelSpec) -> IncrementSet {
    let m = model.driver_dimension();
    let steps = grid.steps;
    let sq = grid.dt.sqrt();
    let chol = model.correlation_factor();
    let mut fine = vec![0.0; steps * m];
    if m == 1 {
        for v in fine.iter_mut() {
            *v = sq * stream.normal();
        }
    } else {
        let mut z = vec![0.0; m];
        for n in 0..steps {
            for zj in z.iter_mut() {
                *zj = stream.normal();
            }
            for i in 0..m {
                let s: f64 = (0..=i).map(|k| chol[i * m + k] * z[k]).sum();
                fine[n * m + i] = sq * s;
            }
        }
    }
    let uniforms = (0..steps).map(|_| stream.open01()).collect();
    let mut inc = IncrementSet { uniforms, ..IncrementSet::from_fine(m, grid.dt, fine) };
    inc.key = Some(stream.key());
    if let Some(spec) = model.jumps() {
        let rate = match &spec.intensity {
            Intensity::Constant(l) => *l,
            Intensity::StateDependent { bound, .. } => *bound,
        };
        inc.jump_times = sample_jump_times(stream, rate, grid.horizon);
        for _ in 0..inc.jump_times.len() {
            inc.jump_marks.push(spec.marks.sample(stream));
            inc.jump_uniforms.push(stream.open01());
            inc.bridge_normals.push(stream.normal());
            inc.bridge_uniforms.push(stream.open01());
        }
    }
    inc
}

/// Exchanges the two fine increments inside every coarse step. Coarse increments,
/// uniforms and jump data are left untouched.
pub fn antithetic_swap(inc: &IncrementSet) -> Result<IncrementSet, IncrementError> {
    let steps = inc.steps();
    if !steps.is_multiple_of(2) {
        return Err(IncrementError::OddStepCount(steps));
    }
    let m = inc.m;
    let mut out = inc.clone();
    for n in 0..steps / 2 {
        let (a, b) = (2 * n * m, (2 * n + 1) * m);
        for j in 0..m {
            out.fine.swap(a + j, b + j);
        }
    }
    Ok(out)
}
