//! Per-level samplers combining a model, a scheme and a payoff.

use thiserror::Error;

use crate::greeks::{smoothed_delta_vega_pair, split_pathwise_pair, vibrato_pair, GreekError, ParamSelector};
use crate::jumps::{jump_adapted_pair, jump_payoff_pair, Acceptance, Intensity};
use crate::payoffs::{payoff_pair, PayoffError, PayoffFamily, PayoffPair, PayoffSpec, SchemeMode};
use crate::schemes::{antithetic_triple, coupled_paths, Scheme, SchemeError};
use crate::sde::{sample_increments, LevelGrid, ModelSpec, SampleStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Greek(#[from] GreekError),
    #[error("non-finite payoff")]
    NonFinitePayoff,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error(transparent)]
    Payoff(#[from] PayoffError),
    #[error("{0}")]
    Unsupported(String),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
}

/// Draws one fine/coarse payoff pair at a level from a sample's random stream.
pub trait LevelSampler: Sync {
    fn sample(&self, level: u32, stream: &mut SampleStream) -> Result<PayoffPair, SampleError>;
    fn horizon(&self) -> f64;
}

fn checked(p: PayoffPair) -> Result<PayoffPair, SampleError> {
    if p.fine.is_finite() && p.coarse.is_finite() {
        Ok(p)
    } else {
        Err(SampleError::NonFinitePayoff)
    }
}

/// Option pricing sampler. Jump models use jump-adapted Milstein (or Euler) paths; a
/// state-dependent intensity is thinned, by default with the change of measure.
#[derive(Clone, Debug)]
pub struct PricingSampler {
    model: ModelSpec,
    payoff: PayoffSpec,
    horizon: f64,
    measure_change: bool,
}

impl PricingSampler {
    pub fn new(model: ModelSpec, payoff: PayoffSpec, horizon: f64) -> Result<Self, SetupError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SetupError::Horizon(horizon));
        }
        payoff.validate(&model)?;
        if model.jumps().is_some() {
            if !model.is_scalar() {
                return Err(SetupError::Unsupported("jump models must be scalar".into()));
            }
            if payoff.mode == SchemeMode::Antithetic {
                return Err(SetupError::Unsupported("antithetic paths are not available with jumps".into()));
            }
            if payoff.mode == SchemeMode::Euler && payoff.family != PayoffFamily::European {
                return Err(SetupError::Unsupported("jump models support only European payoffs in Euler mode".into()));
            }
        }
        Ok(Self { model, payoff, horizon, measure_change: true })
    }

    /// Chooses plain thinning (`false`) or thinning with the change of measure (`true`).
    pub fn with_measure_change(mut self, on: bool) -> Self {
        self.measure_change = on;
        self
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn payoff(&self) -> &PayoffSpec {
        &self.payoff
    }
}

impl LevelSampler for PricingSampler {
    fn sample(&self, level: u32, stream: &mut SampleStream) -> Result<PayoffPair, SampleError> {
        let grid = LevelGrid::new(level, self.horizon);
        let mut inc = sample_increments(stream, &grid, &self.model);
        let spec = &self.payoff;
        let scheme = if spec.mode == SchemeMode::Euler { Scheme::Euler } else { Scheme::Milstein };
        if let Some(jumps) = self.model.jumps() {
            let mode = match (&jumps.intensity, self.measure_change) {
                (Intensity::Constant(_), _) => Acceptance::All,
                (_, true) => Acceptance::MeasureChange,
                (_, false) => Acceptance::Thinning,
            };
            let jp = jump_adapted_pair(&self.model, scheme, &grid, &inc, mode)?;
            return checked(jump_payoff_pair(&jp, spec, &self.model));
        }
        if spec.family == PayoffFamily::Asian && spec.mode == SchemeMode::MilsteinSmoothed {
            inc.draw_bridge_integrals(stream);
        }
        let paths = if spec.mode == SchemeMode::Antithetic && level > 0 {
            antithetic_triple(&self.model, &grid, &inc)?
        } else {
            coupled_paths(&self.model, scheme, &grid, &inc)?
        };
        checked(payoff_pair(&paths, spec, &self.model, &inc))
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// How the last step is treated when estimating a sensitivity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreekMethod {
    /// Conditional expectation (or, for lookback and barrier, the smoothed payoff).
    Smoothed,
    /// Average over this many resampled last increments.
    SplitPathwise(usize),
    /// Likelihood ratio over this many normals for the last step.
    Vibrato(usize),
}

/// What a greek sampler reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Value,
    Sensitivity(ParamSelector),
}

impl Quantity {
    pub const DELTA: Self = Self::Sensitivity(ParamSelector::InitialState(0));
    pub const VEGA: Self = Self::Sensitivity(ParamSelector::Volatility);
}

#[derive(Clone, Debug)]
pub struct GreekSampler {
    model: ModelSpec,
    payoff: PayoffSpec,
    horizon: f64,
    method: GreekMethod,
    quantity: Quantity,
}

impl GreekSampler {
    pub fn new(
        model: ModelSpec,
        payoff: PayoffSpec,
        horizon: f64,
        method: GreekMethod,
        quantity: Quantity,
    ) -> Result<Self, SetupError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SetupError::Horizon(horizon));
        }
        payoff.validate(&model)?;
        if !model.is_scalar() || model.jumps().is_some() {
            return Err(SetupError::Unsupported("sensitivities need a scalar model without jumps".into()));
        }
        if payoff.mode != SchemeMode::MilsteinSmoothed {
            return Err(SetupError::Unsupported("sensitivities use the smoothed Milstein mode".into()));
        }
        let ok = match method {
            GreekMethod::Smoothed => !matches!(payoff.family, PayoffFamily::Asian),
            GreekMethod::SplitPathwise(s) => s > 0 && payoff.family == PayoffFamily::European,
            GreekMethod::Vibrato(s) => s > 0 && matches!(payoff.family, PayoffFamily::European | PayoffFamily::Digital),
        };
        if !ok {
            return Err(SetupError::Unsupported(format!("{:?} with {method:?}", payoff.family)));
        }
        let param = match quantity {
            Quantity::Value => ParamSelector::InitialState(0),
            Quantity::Sensitivity(p) => p,
        };
        if model.sensitivity(model.x0()[0], param).is_none() {
            return Err(SetupError::Unsupported(format!("model `{}` has no derivatives for {param:?}", model.label())));
        }
        Ok(Self { model, payoff, horizon, method, quantity })
    }
}

impl LevelSampler for GreekSampler {
    fn sample(&self, level: u32, stream: &mut SampleStream) -> Result<PayoffPair, SampleError> {
        let grid = LevelGrid::new(level, self.horizon);
        let inc = sample_increments(stream, &grid, &self.model);
        let param = match self.quantity {
            Quantity::Value => ParamSelector::InitialState(0),
            Quantity::Sensitivity(p) => p,
        };
        let pairs = match self.method {
            GreekMethod::Smoothed => smoothed_delta_vega_pair(&self.model, &grid, &inc, &self.payoff, param)?,
            GreekMethod::SplitPathwise(s) => {
                let z: Vec<f64> = (0..s).map(|_| stream.normal()).collect();
                split_pathwise_pair(&self.model, &grid, &inc, &self.payoff, param, &z)?
            }
            GreekMethod::Vibrato(s) => {
                let z: Vec<f64> = (0..s).map(|_| stream.normal()).collect();
                vibrato_pair(&self.model, &grid, &inc, &self.payoff, param, &z)?
            }
        };
        checked(match self.quantity {
            Quantity::Value => pairs.value,
            Quantity::Sensitivity(_) => pairs.sensitivity,
        })
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}
