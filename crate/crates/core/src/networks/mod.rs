//! Modified-MLP MIONets and the positivity-constrained operator triple.

pub mod batch;
mod checkpoint;
mod embed;
mod mionet;
mod mlp;
mod operator;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use embed::fourier_embed;
pub use mionet::{mionet_eval, BranchAdjoint, BranchState, MionetParams, TrunkCache};
pub use mlp::{glorot_init, modified_mlp_forward, MlpCache, ModifiedMlpParams};
pub use operator::{operator_eval, NetKind, OperatorTriple, PointValues, TripleConfig};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid layer sizes: {0}")]
    Sizes(String),
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
