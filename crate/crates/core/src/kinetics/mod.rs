//! Equilibria, collision operators and velocity moments.

mod collision;
mod quadrature;

pub use collision::{q_deg, q_fp, q_isotropic, q_nondeg, CollisionKind, CollisionSpec, CrossSection};
pub use quadrature::{moment, VelocityQuadrature};

use crate::diffcore::{DiffError, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KineticsError {
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("expected {expected} quadrature values, got {got}")]
    NodeCount { expected: usize, got: usize },
    #[error("moment order {0} unsupported (0 or 1)")]
    MomentOrder(u8),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Normalized Maxwellian `(2π)^{-1/2} exp(-v²/2)`.
pub fn maxwellian<R: Real>(v: R) -> R {
    (v * v * -0.5).exp() * INV_SQRT_2PI
}

/// Maxwellian shifted by the potential gradient, `M(v + ∂xφ)`.
pub fn local_maxwellian<R: Real>(v: R, dphi: R) -> R {
    maxwellian(v + dphi)
}

/// Fermi-Dirac distribution `1 / (1 + exp(v²/2 - μ))` in scaled units.
pub fn fermi_dirac<R: Real>(v: R, mu: R) -> R {
    // 1/(1+e^z) = sigmoid(-z)
    (mu - v * v * 0.5).sigmoid()
}
