//! SDE models, level geometry and the coupled randomness of one multilevel sample.

mod increments;
mod model;
mod rng;

pub use increments::{antithetic_swap, sample_increments, IncrementError, IncrementSet, LevelGrid};
pub use model::{cholesky, make_model, Coefficients, ModelError, ModelSpec, ScalarCoefficients, ScalarSensitivity};
pub use rng::{SampleStream, StreamKey};
