//! Residuals of the reformulated system at a single point.

use super::ResidualError;
use crate::diffcore::{Dir, Hyper, Pair, Real, Seeds};
use crate::kinetics::{moment, VelocityQuadrature};

/// `ε ∂t f + ε v ∂x f - ∂xφ ∂v f - Q`.
pub fn kinetic_residual<S: Real>(
    eps: f64,
    f: &Hyper<S>,
    phi: &Hyper<S>,
    v: f64,
    q_value: S,
) -> Result<S, ResidualError> {
    f.require(Seeds::T | Seeds::X | Seeds::V, "kinetic residual f")?;
    phi.require(Seeds::X, "kinetic residual phi")?;
    let transport = f.d(Dir::T) + f.d(Dir::X) * v;
    Ok(transport * eps - phi.d(Dir::X) * f.d(Dir::V) - q_value)
}

/// `∂t ρ + ∂x ⟨v f⟩`.
pub fn mass_residual<S: Real>(rho: &Hyper<S>, flux: &Hyper<S>) -> Result<S, ResidualError> {
    rho.require(Seeds::T, "mass residual rho")?;
    flux.require(Seeds::X, "mass residual flux")?;
    Ok(rho.d(Dir::T) + flux.d(Dir::X))
}

/// `-∂xx φ - (ρ - h)`.
pub fn poisson_residual<S: Real>(phi: &Hyper<S>, rho: S, h: f64) -> Result<S, ResidualError> {
    phi.require(Seeds::XX, "Poisson residual phi")?;
    Ok(-phi.dd(Pair::XX) - rho + h)
}

/// `ρ - ⟨f⟩`.
pub fn consistency_residual<S: Real>(
    rho: S,
    f_nodes: &[S],
    quad: &VelocityQuadrature,
) -> Result<S, ResidualError> {
    Ok(rho - moment(f_nodes, 0, quad)?)
}
