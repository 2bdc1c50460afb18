//! Pointwise residuals, initial data, collocation batches and the AP and
//! baseline losses.

mod batch;
mod initial;
mod loss;
mod pointwise;

pub use batch::{CollocationBatch, PhaseDomain};
pub use initial::{initial_conditions, InitialData, ProblemId};
pub use loss::{
    ap_loss, loss_and_gradient, loss_from_source, loss_value, pi_loss, FieldSource, LossBreakdown, LossGradient, LossKind,
    LossSetup, PenaltyWeights, PiWeights, TripleSource,
};
pub use pointwise::{consistency_residual, kinetic_residual, mass_residual, poisson_residual};

use serde::{Deserialize, Serialize};

use crate::diffcore::DiffError;
use crate::kinetics::KineticsError;
use crate::networks::NetworkError;

#[derive(Debug, thiserror::Error)]
pub enum ResidualError {
    #[error("unknown problem id {0:?}")]
    UnknownProblem(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sample index {index} out of range for {count} couples")]
    SampleIndex { index: usize, count: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Scale parameter as a function of `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsProfile {
    Constant { epsilon: f64 },
    Mixing { epsilon0: f64 },
}

impl EpsProfile {
    pub fn at(&self, x: f64) -> Result<f64, ResidualError> {
        match *self {
            EpsProfile::Constant { epsilon } => Ok(epsilon),
            EpsProfile::Mixing { epsilon0 } => crate::training::mixing_epsilon(x, epsilon0)
                .map_err(|e| ResidualError::InvalidInput(e.to_string())),
        }
    }

    /// Representative value for reports (ε or ε0).
    pub fn nominal(&self) -> f64 {
        match *self {
            EpsProfile::Constant { epsilon } => epsilon,
            EpsProfile::Mixing { epsilon0 } => epsilon0,
        }
    }
}
