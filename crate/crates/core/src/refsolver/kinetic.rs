//! Finite-volume integrator for the ε-scaled Vlasov-Poisson system with
//! collisions: MUSCL upwinding in x and v, SSP-RK2 in time.

use rayon::prelude::*;

use super::steady::GridCollision;
use super::{poisson_periodic, PhaseGrid, RefError, SolutionField};
use crate::kinetics::{CollisionKind, CrossSection};
use crate::residuals::{EpsProfile, InitialData};

#[derive(Debug, Clone, PartialEq)]
pub struct KineticSetup {
    pub init: InitialData,
    pub collision: CollisionKind,
    pub cross_section: CrossSection,
    pub eps: EpsProfile,
}

/// `snapshots` equal intervals on `[0, t_end]`. With `dt = None` each
/// interval picks its step from the stability bound at its start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepping {
    pub t_end: f64,
    pub dt: Option<f64>,
    pub snapshots: usize,
    pub keep_f: bool,
}

const SAFETY: f64 = 0.8;

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
    coll: GridCollision,
    inv_eps: Vec<f64>,
    v: Vec<f64>,
}

impl Solver {
    fn new(setup: &KineticSetup, grid: &PhaseGrid) -> Result<Self, RefError> {
        grid.validate()?;
        let coll = GridCollision::new(setup.collision, setup.cross_section, grid.velocity())?;
        let inv_eps = grid
            .x()
            .iter()
            .map(|&x| {
                let e = setup.eps.at(x)?;
                if e > 0.0 && e.is_finite() {
                    Ok(1.0 / e)
                } else {
                    Err(RefError::Grid(format!("ε({x}) = {e}")))
                }
            })
            .collect::<Result<_, RefError>>()?;
        Ok(Solver { grid: *grid, v: coll.v.clone(), coll, inv_eps })
    }

    fn density(&self, f: &[f64]) -> Vec<f64> {
        let dv = self.grid.velocity().dv();
        f.chunks(self.grid.nv).map(|r| r.iter().sum::<f64>() * dv).collect()
    }

    fn field(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>), RefError> {
        let rho = self.density(f);
        // the mean is projected out, so the background only matters through it
        let e = poisson_periodic(&rho, self.grid.period())?.e;
        Ok((rho, e))
    }

    fn fp(&self) -> bool {
        self.coll.kind == CollisionKind::FokkerPlanck
    }

    fn bound(&self, f: &[f64], e: &[f64]) -> f64 {
        let vg = self.grid.velocity();
        let dv = vg.dv();
        let v_max = vg.v_min.abs().max(vg.v_max.abs());
        let f_max = f.iter().cloned().fold(0.0, f64::max);
        let stiff = self.coll.stiffness(f_max);
        let worst = (0..self.grid.nx)
            .map(|i| {
                let ie = self.inv_eps[i];
                let drift = if self.fp() { e[i].abs() + v_max } else { e[i].abs() };
                let diffusion = if self.fp() { 2.0 / (dv * dv) } else { 0.0 };
                ie * (drift / dv + diffusion + stiff)
            })
            .fold(0.0, f64::max);
        0.5 / (v_max / self.grid.dx() + worst)
    }

    /// `df/dt` at state `f` with field `e`.
    fn rhs(&self, f: &[f64], e: &[f64], out: &mut [f64]) {
        let (nx, nv) = (self.grid.nx, self.grid.nv);
        let dx = self.grid.dx();
        let vg = self.grid.velocity();
        let dv = vg.dv();
        let fp = self.fp();
        let row = |i: isize| {
            let i = i.rem_euclid(nx as isize) as usize;
            &f[i * nv..(i + 1) * nv]
        };
        out.par_chunks_mut(nv).enumerate().for_each_init(
            || (vec![0.0; nv], vec![0.0; nv + 1], Vec::new()),
            |(q, flux, scratch), (i, out)| {
                let ii = i as isize;
                let rows = [row(ii - 2), row(ii - 1), row(ii), row(ii + 1), row(ii + 2)];
                for j in 0..nv {
                    let vj = self.v[j];
                    let c = |k: usize| rows[k][j];
                    // face value at the face between rows k and k+1 (offsets into `rows`)
                    let face = |k: usize| {
                        if vj >= 0.0 {
                            c(k) + 0.5 * minmod(c(k) - c(k - 1), c(k + 1) - c(k))
                        } else {
                            c(k + 1) - 0.5 * minmod(c(k + 1) - c(k), c(k + 2) - c(k + 1))
                        }
                    };
                    out[j] = -vj * (face(2) - face(1)) / dx;
                }
                let fi = rows[2];
                let at = |j: isize| if j < 0 || j >= nv as isize { 0.0 } else { fi[j as usize] };
                let slope = |j: isize| minmod(at(j) - at(j - 1), at(j + 1) - at(j));
                flux[0] = 0.0;
                flux[nv] = 0.0;
                for j in 0..nv - 1 {
                    let speed = if fp { e[i] - vg.face(j) } else { e[i] };
                    let jj = j as isize;
                    let up = if speed >= 0.0 { fi[j] + 0.5 * slope(jj) } else { fi[j + 1] - 0.5 * slope(jj + 1) };
                    let mut phi = speed * up;
                    if fp {
                        phi -= (fi[j + 1] - fi[j]) / dv;
                    }
                    flux[j + 1] = phi;
                }
                self.coll.apply(fi, q, scratch);
                let ie = self.inv_eps[i];
                for j in 0..nv {
                    out[j] += ie * (q[j] - (flux[j + 1] - flux[j]) / dv);
                }
            },
        );
    }
}

/// Stability bound of the explicit scheme at the initial state.
pub fn kinetic_stable_dt(setup: &KineticSetup, grid: &PhaseGrid) -> Result<f64, RefError> {
    let s = Solver::new(setup, grid)?;
    let f = initial_state(setup, grid);
    let (_, e) = s.field(&f)?;
    Ok(s.bound(&f, &e))
}

fn initial_state(setup: &KineticSetup, grid: &PhaseGrid) -> Vec<f64> {
    let v = grid.velocity().centers();
    grid.x().iter().flat_map(|&x| v.iter().map(move |&v| setup.init.f0(x, v))).collect()
}

/// Integrate from the initial data to `t_end` and record `ρ` and `E` (and
/// optionally `f`) at every snapshot time.
pub fn kinetic_integrate(setup: &KineticSetup, grid: &PhaseGrid, stepping: &TimeStepping) -> Result<SolutionField, RefError> {
    if !(stepping.t_end > 0.0) || stepping.snapshots == 0 {
        return Err(RefError::Grid(format!("time stepping {stepping:?}")));
    }
    if let Some(dt) = stepping.dt {
        if !(dt > 0.0) {
            return Err(RefError::Grid(format!("dt = {dt}")));
        }
    }
    let s = Solver::new(setup, grid)?;
    let mut f = initial_state(setup, grid);
    let mut out = SolutionField {
        problem: setup.init.problem,
        epsilon: setup.eps.nominal(),
        times: Vec::new(),
        x: grid.x(),
        rho: Vec::new(),
        e: Vec::new(),
        v: grid.velocity().centers(),
        f: stepping.keep_f.then(Vec::new),
    };
    let mut record = |t: f64, f: &[f64], rho: Vec<f64>, e: Vec<f64>| {
        out.times.push(t);
        out.rho.extend(rho);
        out.e.extend(e);
        if let Some(keep) = out.f.as_mut() {
            keep.extend_from_slice(f);
        }
    };
    let (rho, mut e) = s.field(&f)?;
    record(0.0, &f, rho, e.clone());
    let interval = stepping.t_end / stepping.snapshots as f64;
    let mut k1 = vec![0.0; f.len()];
    let mut stage = vec![0.0; f.len()];
    let mut t = 0.0;
    for snap in 1..=stepping.snapshots {
        let target = match stepping.dt {
            Some(dt) => dt,
            None => SAFETY * s.bound(&f, &e),
        };
        let steps = (interval / target * (1.0 - 1e-12)).ceil().max(1.0);
        let dt = interval / steps;
        for _ in 0..steps as usize {
            let bound = s.bound(&f, &e);
            if dt > bound {
                return Err(RefError::Stability { dt, bound, t });
            }
            s.rhs(&f, &e, &mut k1);
            stage.iter_mut().zip(&f).zip(&k1).for_each(|((s, f), k)| *s = f + dt * k);
            let (_, e1) = s.field(&stage)?;
            s.rhs(&stage, &e1, &mut k1);
            f.iter_mut().zip(&stage).zip(&k1).for_each(|((f, s), k)| *f = 0.5 * *f + 0.5 * (s + dt * k));
            t += dt;
            if f.iter().any(|x| !x.is_finite()) {
                return Err(RefError::NonConvergence { iterations: (t / dt) as usize, residual: f64::NAN });
            }
            e = s.field(&f)?.1;
        }
        t = snap as f64 * interval;
        let (rho, e_now) = s.field(&f)?;
        record(t, &f, rho, e_now);
    }
    out.check()?;
    Ok(out)
}
