//! Multilevel Monte Carlo path simulation for SDE-driven option pricing.
//!
//! The crate is organised bottom-up:
//!
//! - [`sde`]: model definitions, level grids and the coupled per-sample randomness.
//! - [`schemes`]: Euler-Maruyama and Milstein steppers producing coupled fine/coarse
//!   (and antithetic) trajectories.
//! - [`payoffs`]: fine and coarse payoff estimators, including the Brownian-bridge and
//!   conditional-expectation smoothings.
//! - [`greeks`]: pathwise, split-pathwise and vibrato sensitivity estimators.
//! - [`jumps`]: jump-adapted discretisation, constant-rate coupling and thinning with a
//!   change of measure.
//! - [`driver`]: the adaptive multilevel estimator, rate fitting and the standard Monte
//!   Carlo baseline.
//! - [`estimator`]: glue that turns a model and a payoff into a per-level sampler.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod analytic;
pub mod driver;
pub mod estimator;
pub mod greeks;
pub mod jumps;
pub mod normal;
pub mod payoffs;
pub mod schemes;
pub mod sde;

pub use driver::{
    fit_rates, fit_rates_between, fit_rates_raw, max_level_for_bias, optimal_samples, optimal_samples_with_split,
    rate_study, run_mlmc, run_standard_mc, sample_level, DriverError, LevelStats, MlmcConfig, MlmcResult, RateFit,
    StandardMcConfig, StandardMcResult,
};
pub use estimator::{GreekMethod, GreekSampler, LevelSampler, PricingSampler, Quantity, SampleError, SetupError};
pub use greeks::ParamSelector;
pub use jumps::{Intensity, JumpCoefficient, JumpSpec, MarkLaw};
pub use payoffs::{BarrierKind, PayoffFamily, PayoffPair, PayoffSpec, SchemeMode, TerminalFunction};
pub use schemes::{CoupledPaths, PathState, SchemeError};
pub use sde::{make_model, IncrementSet, LevelGrid, ModelError, ModelSpec, SampleStream, StreamKey};
