//! Velocity-space discretization shared by the reference solvers, and the
//! steady profiles `F_E` solving `E ∂v F = Q(F)`.

use nalgebra::{DMatrix, DVector};

use super::RefError;
use crate::kinetics::{maxwellian, CollisionKind, CrossSection};

/// `nv` cells of equal width on `[v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid {
    pub nv: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl VelocityGrid {
    pub fn dv(&self) -> f64 {
        (self.v_max - self.v_min) / self.nv as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.nv).map(|j| self.v_min + (j as f64 + 0.5) * self.dv()).collect()
    }

    /// Velocity at the face between cells `j` and `j + 1`.
    pub fn face(&self, j: usize) -> f64 {
        self.v_min + (j + 1) as f64 * self.dv()
    }

    fn validate(&self) -> Result<(), RefError> {
        if self.nv < 8 || !(self.v_max > self.v_min) {
            return Err(RefError::Grid(format!("velocity grid {self:?}")));
        }
        Ok(())
    }
}

/// Collision operators on a [`VelocityGrid`] with the midpoint rule. The
/// quadrature is built so that every operator conserves the discrete mass
/// `Σ f dv` to rounding.
#[derive(Debug, Clone)]
pub(crate) struct GridCollision {
    pub kind: CollisionKind,
    pub grid: VelocityGrid,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
    /// Maxwellian rescaled to unit discrete mass.
    m_unit: Vec<f64>,
    /// `dv ψ(v_i, v_j)`, row-major.
    kernel: Vec<f64>,
    /// `Σ_j dv ψ_ij M_j`.
    loss_rate: Vec<f64>,
}

impl GridCollision {
    pub fn new(kind: CollisionKind, cs: CrossSection, grid: VelocityGrid) -> Result<Self, RefError> {
        grid.validate()?;
        let v = grid.centers();
        let dv = grid.dv();
        let m: Vec<f64> = v.iter().map(|&v| maxwellian(v)).collect();
        let mass: f64 = m.iter().sum::<f64>() * dv;
        let m_unit = m.iter().map(|x| x / mass).collect();
        let n = grid.nv;
        let mut kernel = Vec::new();
        let mut loss_rate = Vec::new();
        if matches!(kind, CollisionKind::NonDegenerate | CollisionKind::Degenerate) {
            kernel = (0..n * n).map(|k| dv * cs.eval(v[k / n], v[k % n])).collect();
            loss_rate = (0..n).map(|i| (0..n).map(|j| kernel[i * n + j] * m[j]).sum()).collect();
        }
        Ok(GridCollision { kind, grid, v, m, m_unit, kernel, loss_rate })
    }

    fn kernel_apply(&self, g: &[f64], out: &mut [f64]) {
        let n = self.grid.nv;
        for i in 0..n {
            out[i] = self.kernel[i * n..(i + 1) * n].iter().zip(g).map(|(k, g)| k * g).sum();
        }
    }

    /// `Q(f)` for the integral operators; Fokker-Planck is handled as a flux
    /// and contributes nothing here.
    pub fn apply(&self, f: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.grid.nv;
        match self.kind {
            CollisionKind::FokkerPlanck => out.iter_mut().for_each(|o| *o = 0.0),
            CollisionKind::Isotropic => {
                let rho: f64 = f.iter().sum::<f64>() * self.grid.dv();
                for i in 0..n {
                    out[i] = rho * self.m_unit[i] - f[i];
                }
            }
            CollisionKind::NonDegenerate => {
                self.kernel_apply(f, out);
                for i in 0..n {
                    out[i] = self.m[i] * out[i] - self.loss_rate[i] * f[i];
                }
            }
            CollisionKind::Degenerate => {
                scratch.clear();
                scratch.extend((0..n).map(|j| self.m[j] * (1.0 - f[j])));
                let mut loss = vec![0.0; n];
                self.kernel_apply(scratch, &mut loss);
                self.kernel_apply(f, out);
                for i in 0..n {
                    out[i] = self.m[i] * (1.0 - f[i]) * out[i] - f[i] * loss[i];
                }
            }
        }
    }

    /// Upper bound on the relaxation rate of the operator for states with
    /// `0 ≤ f ≤ f_max`.
    pub fn stiffness(&self, f_max: f64) -> f64 {
        let n = self.grid.nv;
        let row = |i: usize| self.kernel[i * n..(i + 1) * n].iter().sum::<f64>();
        match self.kind {
            CollisionKind::FokkerPlanck => 0.0,
            CollisionKind::Isotropic => 1.0 + self.m_unit.iter().cloned().fold(0.0, f64::max) * self.grid.dv(),
            CollisionKind::NonDegenerate => {
                (0..n).map(|i| self.loss_rate[i] + self.m[i] * self.kernel[i * n + i]).fold(0.0, f64::max)
            }
            CollisionKind::Degenerate => (0..n)
                .map(|i| self.m[i] * row(i) * f_max.max(1.0) + self.loss_rate[i] + self.m[i] * self.kernel[i * n + i])
                .fold(0.0, f64::max),
        }
    }

    /// Rows of the operator `F ↦ Q(F)`, linearized around `g` for the
    /// degenerate case in a form that keeps mass conservation exact.
    fn matrix(&self, g: &[f64]) -> DMatrix<f64> {
        let n = self.grid.nv;
        let dv = self.grid.dv();
        let mut q = DMatrix::zeros(n, n);
        match self.kind {
            CollisionKind::FokkerPlanck => {}
            CollisionKind::Isotropic => {
                for i in 0..n {
                    for j in 0..n {
                        q[(i, j)] = self.m_unit[i] * dv;
                    }
                    q[(i, i)] -= 1.0;
                }
            }
            CollisionKind::NonDegenerate | CollisionKind::Degenerate => {
                let deg = self.kind == CollisionKind::Degenerate;
                let a: Vec<f64> = (0..n).map(|i| if deg { self.m[i] * (1.0 - g[i]) } else { self.m[i] }).collect();
                for i in 0..n {
                    let mut loss = 0.0;
                    for j in 0..n {
                        let k = self.kernel[i * n + j];
                        q[(i, j)] += a[i] * k;
                        loss += k * a[j];
                    }
                    q[(i, i)] -= loss;
                }
            }
        }
        q
    }
}

/// First-order upwind discretization of `∂v Φ` with zero flux through both
/// ends, where `Φ = E F` plus the Fokker-Planck flux `-(vF + ∂vF)`.
fn transport_matrix(e: f64, fp: bool, grid: &VelocityGrid) -> DMatrix<f64> {
    let n = grid.nv;
    let dv = grid.dv();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n - 1 {
        let speed = if fp { e - grid.face(j) } else { e };
        let up = if speed >= 0.0 { j } else { j + 1 };
        // flux through face j+1/2 as a row vector over F
        let mut flux = vec![(up, speed)];
        if fp {
            flux.push((j + 1, -1.0 / dv));
            flux.push((j, 1.0 / dv));
        }
        for (col, c) in flux {
            d[(j, col)] += c / dv;
            d[(j + 1, col)] -= c / dv;
        }
    }
    d
}

fn residual(d: &DMatrix<f64>, coll: &GridCollision, f: &[f64]) -> f64 {
    let n = f.len();
    let fv = DVector::from_column_slice(f);
    let transport = d * &fv;
    let mut q = vec![0.0; n];
    let mut scratch = Vec::new();
    coll.apply(f, &mut q, &mut scratch);
    (0..n).map(|i| (transport[i] - q[i]).abs()).fold(0.0, f64::max)
}

const MAX_ITER: usize = 10_000;
const DAMPING: f64 = 0.5;

/// Steady profile with `∫F dv = rho_target` solving `E ∂v F = Q(F)` on
/// `grid`. The degenerate case uses a damped fixed point with clipping to
/// `[0, 1]`.
pub fn steady_kinetic_fe(
    e: f64,
    kind: CollisionKind,
    cs: CrossSection,
    rho_target: f64,
    grid: &VelocityGrid,
) -> Result<Vec<f64>, RefError> {
    let coll = GridCollision::new(kind, cs, *grid)?;
    steady_with(&coll, e, rho_target, None)
}

pub(crate) fn steady_with(
    coll: &GridCollision,
    e: f64,
    rho_target: f64,
    start: Option<&[f64]>,
) -> Result<Vec<f64>, RefError> {
    let grid = &coll.grid;
    let n = grid.nv;
    let dv = grid.dv();
    if !e.is_finite() || !(rho_target > 0.0) {
        return Err(RefError::Grid(format!("E = {e}, rho = {rho_target}")));
    }
    let d = transport_matrix(e, coll.kind == CollisionKind::FokkerPlanck, grid);
    let solve = |g: &[f64]| -> Result<Vec<f64>, RefError> {
        let mut a = &d - coll.matrix(g);
        let mut b = DVector::zeros(n);
        // the rows sum to zero against dv, so one of them is replaced by the mass constraint
        for j in 0..n {
            a[(n - 1, j)] = dv;
        }
        b[n - 1] = rho_target;
        let x = a.lu().solve(&b).ok_or_else(|| RefError::Singular(format!("steady system at E = {e}")))?;
        Ok(x.iter().copied().collect())
    };
    let tol = 1e-10 * rho_target.max(1.0);
    if coll.kind != CollisionKind::Degenerate {
        let f = solve(&[])?;
        let r = residual(&d, coll, &f);
        if !(r < 1e-8) {
            return Err(RefError::NonConvergence { iterations: 1, residual: r });
        }
        return Ok(f);
    }
    let mut g: Vec<f64> = match start {
        Some(s) if s.len() == n => s.to_vec(),
        _ => coll.m_unit.iter().map(|m| (rho_target * m).min(0.9)).collect(),
    };
    let mut r = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let f = solve(&g)?;
        for j in 0..n {
            g[j] = ((1.0 - DAMPING) * g[j] + DAMPING * f[j]).clamp(0.0, 1.0);
        }
        r = residual(&d, coll, &g);
        let mass_err = (g.iter().sum::<f64>() * dv - rho_target).abs();
        if r < tol && mass_err < tol {
            return Ok(g);
        }
        if !r.is_finite() {
            return Err(RefError::NonConvergence { iterations: it, residual: r });
        }
    }
    Err(RefError::NonConvergence { iterations: MAX_ITER, residual: r })
}
