//! Dataset sampling, optimizer, experiment configuration and the training
//! loop.

mod config;
mod dataset;
mod optim;
mod train;

pub use config::{
    ExperimentConfig, OptimizerSection, ProblemSection, RuntimeSection, SamplingSection, WeightsSection,
};
pub use dataset::{sample_couples, InputCouple, ParamRanges, SensorGrid};
pub use optim::{adam_step, early_stop, mixing_epsilon, AdamConfig, AdamState, EarlyStop};
pub use train::{
    sample_dataset, train, train_with, Dataset, LogRecord, Silent, Split, TrainHistory, TrainObserver,
    DIVERGENCE_THRESHOLD,
};

use crate::networks::NetworkError;
use crate::residuals::ResidualError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("diverged at iteration {iter}: total loss {total:e}")]
    Diverged { iter: u64, total: f64 },
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}
