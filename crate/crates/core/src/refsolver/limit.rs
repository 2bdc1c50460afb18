//! Solvers for the high-field limit `ρ_t + ∂x J(ρ, E) = 0` with
//! `-φ'' = ρ - h`, `E = -φ'`, where `J` is the current of the steady
//! profile `F_E` of mass `ρ`.

use rayon::prelude::*;

use super::steady::{steady_with, GridCollision};
use super::{poisson_periodic, PhaseGrid, RefError, SolutionField, TimeStepping};
use crate::kinetics::{CollisionKind, CrossSection};
use crate::residuals::InitialData;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetup {
    pub init: InitialData,
    pub collision: CollisionKind,
    pub cross_section: CrossSection,
    /// Velocity cells used to tabulate the current.
    pub nv: usize,
    /// Table sizes along `E` and, for the degenerate operator, `ρ`.
    pub table_e: usize,
    pub table_rho: usize,
}

const SAFETY: f64 = 0.8;

/// `J(ρ, E)`: closed form for Fokker-Planck, `ρ σ(E)` for the linear
/// operators, a bilinear table for the degenerate one.
struct Current {
    kind: CollisionKind,
    coll: Option<GridCollision>,
    e_max: f64,
    rho_max: f64,
    n_e: usize,
    n_rho: usize,
    /// `σ(E_k)` or `J(ρ_r, E_k)` row-major in `ρ`.
    table: Vec<f64>,
}

fn flux_of(f: &[f64], coll: &GridCollision) -> f64 {
    f.iter().zip(&coll.v).map(|(f, v)| f * v).sum::<f64>() * coll.grid.dv()
}

impl Current {
    fn new(setup: &LimitSetup, grid: &PhaseGrid) -> Result<Self, RefError> {
        if setup.table_e < 3 || (setup.collision == CollisionKind::Degenerate && setup.table_rho < 3) {
            return Err(RefError::Grid("current tables need at least 3 points per axis".into()));
        }
        let coll = match setup.collision {
            CollisionKind::FokkerPlanck => None,
            kind => Some(GridCollision::new(
                kind,
                setup.cross_section,
                super::VelocityGrid { nv: setup.nv, v_min: grid.v_min, v_max: grid.v_max },
            )?),
        };
        Ok(Current {
            kind: setup.collision,
            coll,
            e_max: 0.0,
            rho_max: 0.0,
            n_e: setup.table_e,
            n_rho: setup.table_rho,
            table: Vec::new(),
        })
    }

    fn e_node(&self, k: usize) -> f64 {
        -self.e_max + 2.0 * self.e_max * k as f64 / (self.n_e - 1) as f64
    }

    fn rho_node(&self, r: usize) -> f64 {
        self.rho_max * r as f64 / (self.n_rho - 1) as f64
    }

    /// Make sure the tables cover `|E| ≤ e` and `ρ ≤ rho`.
    fn cover(&mut self, e: f64, rho: f64) -> Result<(), RefError> {
        let Some(coll) = &self.coll else { return Ok(()) };
        let deg = self.kind == CollisionKind::Degenerate;
        if !self.table.is_empty() && e <= self.e_max && (!deg || rho <= self.rho_max) {
            return Ok(());
        }
        self.e_max = (1.5 * e).max(self.e_max).max(0.5);
        if deg {
            self.rho_max = (1.5 * rho).max(self.rho_max);
        }
        let es: Vec<f64> = (0..self.n_e).map(|k| self.e_node(k)).collect();
        self.table = if deg {
            let rhos: Vec<f64> = (0..self.n_rho).map(|r| self.rho_node(r)).collect();
            let rows: Vec<Vec<f64>> = rhos
                .par_iter()
                .map(|&rho| {
                    if rho == 0.0 {
                        return Ok(vec![0.0; es.len()]);
                    }
                    // sweep outwards from E = 0 with warm starts
                    let mid = es.len() / 2;
                    let mut row = vec![0.0; es.len()];
                    let mut prev: Option<Vec<f64>> = None;
                    for k in mid..es.len() {
                        let f = steady_with(coll, es[k], rho, prev.as_deref())?;
                        row[k] = flux_of(&f, coll);
                        prev = Some(f);
                    }
                    prev = None;
                    for k in (0..mid).rev() {
                        let f = steady_with(coll, es[k], rho, prev.as_deref())?;
                        row[k] = flux_of(&f, coll);
                        prev = Some(f);
                    }
                    Ok(row)
                })
                .collect::<Result<_, RefError>>()?;
            rows.concat()
        } else {
            es.par_iter().map(|&e| Ok(flux_of(&steady_with(coll, e, 1.0, None)?, coll))).collect::<Result<_, RefError>>()?
        };
        Ok(())
    }

    fn locate(&self, e: f64) -> (usize, f64) {
        let s = ((e + self.e_max) / (2.0 * self.e_max) * (self.n_e - 1) as f64).clamp(0.0, (self.n_e - 1) as f64);
        let k = (s.floor() as usize).min(self.n_e - 2);
        (k, s - k as f64)
    }

    /// `J(ρ, E)` and `∂J/∂ρ`.
    fn eval(&self, rho: f64, e: f64) -> (f64, f64) {
        match self.kind {
            CollisionKind::FokkerPlanck => (rho * e, e),
            CollisionKind::Degenerate => {
                let (k, a) = self.locate(e);
                let s = (rho / self.rho_max * (self.n_rho - 1) as f64).clamp(0.0, (self.n_rho - 1) as f64);
                let r = (s.floor() as usize).min(self.n_rho - 2);
                let b = s - r as f64;
                let t = |r: usize, k: usize| self.table[r * self.n_e + k];
                let lo = (1.0 - a) * t(r, k) + a * t(r, k + 1);
                let hi = (1.0 - a) * t(r + 1, k) + a * t(r + 1, k + 1);
                let slope = (hi - lo) / (self.rho_max / (self.n_rho - 1) as f64);
                ((1.0 - b) * lo + b * hi, slope)
            }
            _ => {
                let (k, a) = self.locate(e);
                let sigma = (1.0 - a) * self.table[k] + a * self.table[k + 1];
                (rho * sigma, sigma)
            }
        }
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

struct Solver {
    grid: PhaseGrid,
    current: Current,
}

impl Solver {
    fn field(&self, rho: &[f64]) -> Result<Vec<f64>, RefError> {
        Ok(poisson_periodic(rho, self.grid.period())?.e)
    }

    fn prepare(&mut self, rho: &[f64], e: &[f64]) -> Result<(), RefError> {
        let e_max = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let rho_max = rho.iter().cloned().fold(0.0, f64::max);
        self.current.cover(e_max, rho_max)
    }

    /// Upper bound on `|∂J/∂ρ|` over the cells.
    fn max_speed(&self, rho: &[f64], e: &[f64]) -> f64 {
        let n = rho.len();
        (0..n)
            .map(|i| {
                let ef = 0.5 * (e[i] + e[(i + 1) % n]);
                let r = rho[i].max(rho[(i + 1) % n]);
                let (_, a) = self.current.eval(r, ef);
                let (_, b) = self.current.eval(0.0, ef);
                a.abs().max(b.abs())
            })
            .fold(0.0, f64::max)
    }

    fn bound(&self, rho: &[f64], e: &[f64]) -> f64 {
        0.5 * self.grid.dx() / self.max_speed(rho, e).max(1e-12)
    }

    fn rhs(&self, rho: &[f64], e: &[f64], out: &mut [f64]) {
        let n = rho.len();
        let at = |i: isize| rho[i.rem_euclid(n as isize) as usize];
        let alpha = self.max_speed(rho, e);
        let flux: Vec<f64> = (0..n as isize)
            .map(|i| {
                let ef = 0.5 * (e[i as usize] + e[((i + 1) as usize) % n]);
                let left = at(i) + 0.5 * minmod(at(i) - at(i - 1), at(i + 1) - at(i));
                let right = at(i + 1) - 0.5 * minmod(at(i + 1) - at(i), at(i + 2) - at(i + 1));
                match self.current.kind {
                    CollisionKind::Degenerate => {
                        let (jl, _) = self.current.eval(left, ef);
                        let (jr, _) = self.current.eval(right, ef);
                        0.5 * (jl + jr) - 0.5 * alpha * (right - left)
                    }
                    _ => {
                        let (_, a) = self.current.eval(1.0, ef);
                        a * if a >= 0.0 { left } else { right }
                    }
                }
            })
            .collect();
        let dx = self.grid.dx();
        for i in 0..n {
            out[i] = -(flux[i] - flux[(i + n - 1) % n]) / dx;
        }
    }
}

fn build(setup: &LimitSetup, grid: &PhaseGrid) -> Result<(Solver, Vec<f64>), RefError> {
    grid.validate()?;
    let mut s = Solver { grid: *grid, current: Current::new(setup, grid)? };
    let rho: Vec<f64> = grid.x().iter().map(|&x| setup.init.rho0(x)).collect();
    let e = s.field(&rho)?;
    s.prepare(&rho, &e)?;
    Ok((s, rho))
}

/// CFL bound of the limit scheme at the initial state.
pub fn limit_stable_dt(setup: &LimitSetup, grid: &PhaseGrid) -> Result<f64, RefError> {
    let (s, rho) = build(setup, grid)?;
    let e = s.field(&rho)?;
    Ok(s.bound(&rho, &e))
}

/// Integrate the limit equation from `ρ0`. The velocity extent of `grid`
/// sets the domain of the tabulated profiles; `grid.nv` is unused.
pub fn highfield_limit_solve(setup: &LimitSetup, grid: &PhaseGrid, stepping: &TimeStepping) -> Result<SolutionField, RefError> {
    if !(stepping.t_end > 0.0) || stepping.snapshots == 0 {
        return Err(RefError::Grid(format!("time stepping {stepping:?}")));
    }
    let (mut s, mut rho) = build(setup, grid)?;
    let mut e = s.field(&rho)?;
    let mut out = SolutionField {
        problem: setup.init.problem,
        epsilon: 0.0,
        times: vec![0.0],
        x: grid.x(),
        rho: rho.clone(),
        e: e.clone(),
        v: Vec::new(),
        f: None,
    };
    let interval = stepping.t_end / stepping.snapshots as f64;
    let n = rho.len();
    let (mut k, mut stage) = (vec![0.0; n], vec![0.0; n]);
    let mut t = 0.0;
    for snap in 1..=stepping.snapshots {
        let target = stepping.dt.unwrap_or_else(|| SAFETY * s.bound(&rho, &e));
        let steps = (interval / target * (1.0 - 1e-12)).ceil().max(1.0);
        let dt = interval / steps;
        for _ in 0..steps as usize {
            s.prepare(&rho, &e)?;
            let bound = s.bound(&rho, &e);
            if dt > bound {
                return Err(RefError::Stability { dt, bound, t });
            }
            s.rhs(&rho, &e, &mut k);
            stage.iter_mut().zip(&rho).zip(&k).for_each(|((s, r), k)| *s = r + dt * k);
            let e1 = s.field(&stage)?;
            s.prepare(&stage, &e1)?;
            s.rhs(&stage, &e1, &mut k);
            rho.iter_mut().zip(&stage).zip(&k).for_each(|((r, s), k)| *r = 0.5 * *r + 0.5 * (s + dt * k));
            if rho.iter().any(|r| !r.is_finite()) {
                return Err(RefError::NonConvergence { iterations: (t / dt) as usize, residual: f64::NAN });
            }
            e = s.field(&rho)?;
            t += dt;
        }
        t = snap as f64 * interval;
        out.times.push(t);
        out.rho.extend_from_slice(&rho);
        out.e.extend_from_slice(&e);
    }
    out.check()?;
    Ok(out)
}
