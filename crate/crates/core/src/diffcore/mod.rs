//! Automatic differentiation: forward-mode hyper-duals for coordinate
//! derivatives, a reverse-mode tape for parameter gradients.

mod hyper;
mod real;
mod tape;

pub use hyper::{
    eval_real, primitive_eval, seed_coordinates, Dir, Hyper, HyperScalar, Pair, PrimOp, Seeds,
};
pub use real::{sigmoid, softplus, swish_derivs, Real};
pub use tape::{reverse_sweep, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("direction {0:?} seeded twice")]
    DuplicateDirection(Dir),
    #[error("second-derivative pair {0:?} listed twice")]
    DuplicatePair(Pair),
    #[error("second-derivative pair {0:?} requires its direction to be seeded")]
    UnseededPair(Pair),
    #[error("at least one direction must be seeded")]
    NoDirections,
    #[error("domain error in {op} (tape node {node:?})")]
    Domain { op: &'static str, node: Option<usize> },
    #[error("{op:?} takes {expected} operands, got {got}")]
    Arity { op: PrimOp, expected: usize, got: usize },
    #[error("operand layouts differ: {0:?} vs {1:?}")]
    LayoutMismatch(Seeds, Seeds),
    #[error("{what} is missing derivative components {missing:?}")]
    MissingComponent { what: &'static str, missing: Seeds },
    #[error("tape already swept")]
    TapeConsumed,
    #[error("tape is empty")]
    EmptyTape,
    #[error("output belongs to a different tape")]
    ForeignVar,
}
