//! Classical reference solvers: a periodic spectral Poisson solver, an
//! ε-resolved kinetic integrator, steady velocity profiles `F_E`, and the
//! high-field limit solvers. Also the error metrics used to score networks.

mod field;
mod kinetic;
mod limit;
mod poisson;
mod steady;

pub use field::{read_field_binary, read_field_csv, write_field_binary, write_field_csv, SolutionField};
pub use kinetic::{kinetic_integrate, kinetic_stable_dt, KineticSetup, TimeStepping};
pub use limit::{highfield_limit_solve, limit_stable_dt, LimitSetup};
pub use poisson::{poisson_periodic, PoissonSolution};
pub use steady::{steady_kinetic_fe, VelocityGrid};

use crate::residuals::ResidualError;

#[derive(Debug, thiserror::Error)]
pub enum RefError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("time step {dt:e} exceeds the stability bound {bound:e} at t = {t}")]
    Stability { dt: f64, bound: f64, t: f64 },
    #[error("no convergence after {iterations} iterations, residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("reference has zero norm")]
    ZeroReference,
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Residual(#[from] ResidualError),
}

/// Uniform phase-space grid: `nx` periodic nodes `x_i = x_min + iΔx` and `nv`
/// velocity cell centres on `[v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub nx: usize,
    pub nv: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl PhaseGrid {
    pub fn new(nx: usize, nv: usize, x: (f64, f64), v: (f64, f64)) -> Result<Self, RefError> {
        let g = PhaseGrid { nx, nv, x_min: x.0, x_max: x.1, v_min: v.0, v_max: v.1 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), RefError> {
        if self.nx < 8 || self.nv < 8 {
            return Err(RefError::Grid(format!("need at least 8 points per axis, got {}×{}", self.nx, self.nv)));
        }
        if !(self.x_max > self.x_min) || !(self.v_max > self.v_min) {
            return Err(RefError::Grid("empty interval".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.period() / self.nx as f64
    }

    pub fn x(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x_min + i as f64 * self.dx()).collect()
    }

    pub fn velocity(&self) -> VelocityGrid {
        VelocityGrid { nv: self.nv, v_min: self.v_min, v_max: self.v_max }
    }
}

/// `sqrt(Σ|pred − ref|² / Σ|ref|²)`.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64, RefError> {
    if pred.len() != reference.len() {
        return Err(RefError::Shape(format!("{} predictions for {} reference values", pred.len(), reference.len())));
    }
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(RefError::ZeroReference);
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((num / den).sqrt())
}

/// `‖E(t)‖_{L²} = sqrt(Σ_x E² Δx)` for every row of the `nt × nx` array `e`.
pub fn electric_energy(e: &[f64], nx: usize, dx: f64) -> Vec<f64> {
    if nx == 0 {
        return Vec::new();
    }
    e.chunks(nx).map(|row| (row.iter().map(|v| v * v).sum::<f64>() * dx).sqrt()).collect()
}

/// Least-squares slope of `ln y` against `t`.
pub fn log_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - my)).sum();
    let var: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    cov / var
}
