//! Initial data of the benchmark problems.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ResidualError;
use crate::kinetics::{maxwellian, VelocityQuadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    Landau,
    DoublePeak,
    TwoStream,
    BumpOnTail,
    Mixing,
}

impl ProblemId {
    pub const ALL: [ProblemId; 5] =
        [ProblemId::Landau, ProblemId::DoublePeak, ProblemId::TwoStream, ProblemId::BumpOnTail, ProblemId::Mixing];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Landau => "landau",
            ProblemId::DoublePeak => "double_peak",
            ProblemId::TwoStream => "two_stream",
            ProblemId::BumpOnTail => "bump_on_tail",
            ProblemId::Mixing => "mixing",
        }
    }

    pub fn v_max(self) -> f64 {
        match self {
            ProblemId::BumpOnTail => 8.0,
            _ => 6.0,
        }
    }

    /// Spatial interval `[x_min, x_max]` for wave number `k`.
    pub fn x_range(self, k: f64) -> (f64, f64) {
        match self {
            ProblemId::Mixing => (-1.0, 1.0),
            _ => (0.0, 2.0 * PI / k),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = ResidualError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ResidualError::UnknownProblem(s.to_string()))
    }
}

/// `f0`, `ρ0 = ⟨f0⟩` and the zero-mean `φ0` with `-φ0'' = ρ0 - h`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub problem: ProblemId,
    pub h: f64,
    pub alpha: f64,
    pub k: f64,
    /// `⟨g⟩` of the velocity profile `g` over the truncated domain; `f0 =
    /// h g(v) (1 + α cos kx)` for all problems but mixing.
    pub profile_mass: f64,
}

fn profile(problem: ProblemId, v: f64) -> f64 {
    let s = (2.0 * PI).sqrt();
    match problem {
        ProblemId::Landau | ProblemId::Mixing => maxwellian(v),
        ProblemId::DoublePeak => {
            (0.5 * (-(v - 1.5).powi(2) / 2.0).exp() + 0.5 * (-(v + 1.5).powi(2) / 2.0).exp()) / s
        }
        ProblemId::TwoStream => v * v * maxwellian(v),
        ProblemId::BumpOnTail => (0.9 * (-v * v / 2.0).exp() + 0.2 * (-4.0 * (v - 4.5).powi(2)).exp()) / s,
    }
}

/// Build the initial data of `problem` for background charge `h`,
/// perturbation `alpha` and wave number `k`.
pub fn initial_conditions(problem: ProblemId, h: f64, alpha: f64, k: f64) -> Result<InitialData, ResidualError> {
    if !(k > 0.0) || !h.is_finite() || !alpha.is_finite() {
        return Err(ResidualError::InvalidInput(format!("h={h}, alpha={alpha}, k={k}")));
    }
    let profile_mass = match problem {
        // closed forms on the whole line; the truncation error is below 1e-8
        ProblemId::Landau | ProblemId::DoublePeak | ProblemId::Mixing => 1.0,
        ProblemId::TwoStream | ProblemId::BumpOnTail => {
            let vm = problem.v_max();
            let q = VelocityQuadrature::gauss_legendre(64, -vm, vm)
                .map_err(|e| ResidualError::InvalidInput(e.to_string()))?;
            // composite rule over 32 panels to resolve the narrow bump
            let panels = 32;
            let w = 2.0 * vm / panels as f64;
            (0..panels)
                .map(|p| {
                    let a = -vm + p as f64 * w;
                    q.integrate(|v| profile(problem, a + (v + vm) * w / (2.0 * vm))) * w / (2.0 * vm)
                })
                .sum()
        }
    };
    Ok(InitialData { problem, h, alpha, k, profile_mass })
}

impl InitialData {
    pub fn f0(&self, x: f64, v: f64) -> f64 {
        match self.problem {
            ProblemId::Mixing => self.h / 2.0 * maxwellian(v) * (2.0 + (self.k * x).sin()),
            p => self.h * profile(p, v) * (1.0 + self.alpha * (self.k * x).cos()),
        }
    }

    pub fn rho0(&self, x: f64) -> f64 {
        match self.problem {
            ProblemId::Mixing => self.h / 2.0 * (2.0 + (self.k * x).sin()),
            _ => self.h * self.profile_mass * (1.0 + self.alpha * (self.k * x).cos()),
        }
    }

    /// Zero-mean potential; the constant part of `ρ0 - h` (nonzero when the
    /// profile is not unit-mass) is projected out.
    pub fn phi0(&self, x: f64) -> f64 {
        let k2 = self.k * self.k;
        match self.problem {
            ProblemId::Mixing => self.h * (self.k * x).sin() / (2.0 * k2),
            _ => self.h * self.profile_mass * self.alpha * (self.k * x).cos() / k2,
        }
    }

    /// `E0 = -φ0'`.
    pub fn e0(&self, x: f64) -> f64 {
        match self.problem {
            ProblemId::Mixing => -self.h * (self.k * x).cos() / (2.0 * self.k),
            _ => self.h * self.profile_mass * self.alpha * (self.k * x).sin() / self.k,
        }
    }
}
