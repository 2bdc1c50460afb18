//! The AP loss, the two-network baseline loss, and their parameter gradients.
//!
//! Network outputs are produced by batched trunk passes. The residual
//! assembly then runs on a scalar tape per chunk of points, whose leaves are
//! the payload components of the raw network outputs. Sweeping that tape
//! yields output adjoints, which the batched reverse passes carry into the
//! parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pointwise::{consistency_residual, kinetic_residual, mass_residual, poisson_residual};
use super::{CollocationBatch, EpsProfile, ResidualError};
use crate::diffcore::{reverse_sweep, Dir, Hyper, HyperScalar, Real, Seeds, Tape, Var};
use crate::kinetics::{moment, CollisionKind, CollisionSpec};
use crate::networks::batch::{HBatch, Mat};
use crate::networks::{mionet_eval, BranchAdjoint, BranchState, NetKind, OperatorTriple, TrunkCache};
use crate::training::InputCouple;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3_rho: f64,
    pub lambda3_f: f64,
    pub lambda3_phi: f64,
    /// Boundary terms; periodicity is built into the networks, so unused.
    pub lambda4: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        PenaltyWeights { lambda1: 1.0, lambda2: 1.0, lambda3_rho: 1.0, lambda3_f: 1.0, lambda3_phi: 1.0, lambda4: 0.0 }
    }
}

/// Weights of the baseline loss: `mu1` on the kinetic and Poisson terms,
/// `mu2` on the initial terms, `mu3` on (unused) boundary terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl Default for PiWeights {
    fn default() -> Self {
        PiWeights { mu1: 1.0, mu2: 1.0, mu3: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Ap(PenaltyWeights),
    Pi(PiWeights),
}

impl LossKind {
    fn is_ap(&self) -> bool {
        matches!(self, LossKind::Ap(_))
    }

    /// Weights in [`LossBreakdown::NAMES`] order.
    fn coefficients(&self) -> [f64; 7] {
        match *self {
            LossKind::Ap(w) => {
                [w.lambda1, w.lambda1, w.lambda1, w.lambda2, w.lambda3_rho, w.lambda3_f, w.lambda3_phi]
            }
            LossKind::Pi(w) => [w.mu1, 0.0, w.mu1, 0.0, 0.0, w.mu2, w.mu2],
        }
    }
}

/// Mean squared residual of every term and their weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub kinetic: f64,
    pub mass: f64,
    pub poisson: f64,
    pub consistency: f64,
    pub ic_rho: f64,
    pub ic_f: f64,
    pub ic_phi: f64,
}

impl LossBreakdown {
    pub const NAMES: [&'static str; 7] = ["kinetic", "mass", "poisson", "consistency", "ic_rho", "ic_f", "ic_phi"];

    pub fn components(&self) -> [f64; 7] {
        [self.kinetic, self.mass, self.poisson, self.consistency, self.ic_rho, self.ic_f, self.ic_phi]
    }

    fn from_components(c: [f64; 7], coef: &[f64; 7]) -> Self {
        let total = c.iter().zip(coef).map(|(a, b)| a * b).sum();
        LossBreakdown {
            total,
            kinetic: c[0],
            mass: c[1],
            poisson: c[2],
            consistency: c[3],
            ic_rho: c[4],
            ic_f: c[5],
            ic_phi: c[6],
        }
    }

    /// Name of the first non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        if let Some(i) = self.components().iter().position(|x| !x.is_finite()) {
            return Some(Self::NAMES[i]);
        }
        (!self.total.is_finite()).then_some("total")
    }
}

/// Everything besides the networks and points that defines a loss.
#[derive(Debug, Clone)]
pub struct LossSetup {
    pub kind: LossKind,
    pub eps: EpsProfile,
    pub spec: CollisionSpec,
}

/// Exact or reference fields that can stand in for the networks; values
/// are post-head (`f` and `ρ` already positive where applicable).
pub trait FieldSource: Sync {
    fn f(&self, sample: usize, t: HyperScalar, x: HyperScalar, v: HyperScalar) -> Result<HyperScalar, ResidualError>;
    fn rho(&self, sample: usize, t: HyperScalar, x: HyperScalar) -> Result<HyperScalar, ResidualError>;
    fn phi(&self, sample: usize, t: HyperScalar, x: HyperScalar) -> Result<HyperScalar, ResidualError>;
}

/// Point-by-point network evaluation through [`mionet_eval`].
pub struct TripleSource<'a> {
    pub triple: &'a OperatorTriple,
    pub couples: &'a [InputCouple],
}

impl TripleSource<'_> {
    fn eval(&self, k: NetKind, s: usize, t: HyperScalar, x: HyperScalar, v: HyperScalar) -> Result<HyperScalar, ResidualError> {
        let u = self.couples.get(s).ok_or(ResidualError::SampleIndex { index: s, count: self.couples.len() })?;
        let y = self.triple.embed(k, t, x, v);
        let raw = mionet_eval(self.triple.net(k), &u.f0_sensors, &u.h_sensors, &y)?;
        Ok(if k.positive() { raw.softplus() } else { raw })
    }
}

impl FieldSource for TripleSource<'_> {
    fn f(&self, s: usize, t: HyperScalar, x: HyperScalar, v: HyperScalar) -> Result<HyperScalar, ResidualError> {
        self.eval(NetKind::F, s, t, x, v)
    }

    fn rho(&self, s: usize, t: HyperScalar, x: HyperScalar) -> Result<HyperScalar, ResidualError> {
        self.eval(NetKind::P, s, t, x, Hyper::constant(0.0))
    }

    fn phi(&self, s: usize, t: HyperScalar, x: HyperScalar) -> Result<HyperScalar, ResidualError> {
        self.eval(NetKind::Phi, s, t, x, Hyper::constant(0.0))
    }
}

/// The evaluations one loss needs: which network, at which points, with
/// which derivative components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Buf {
    /// `F` at domain points.
    FDom,
    /// `F` at `(t, x, v_j)` for every domain point and quadrature node.
    FDomNodes,
    PDom,
    PhiDom,
    FIc,
    FIcNodes,
    PIc,
    PhiIc,
}

const BUFS: [Buf; 8] =
    [Buf::FDom, Buf::FDomNodes, Buf::PDom, Buf::PhiDom, Buf::FIc, Buf::FIcNodes, Buf::PIc, Buf::PhiIc];

impl Buf {
    fn net(self) -> NetKind {
        match self {
            Buf::FDom | Buf::FDomNodes | Buf::FIc | Buf::FIcNodes => NetKind::F,
            Buf::PDom | Buf::PIc => NetKind::P,
            Buf::PhiDom | Buf::PhiIc => NetKind::Phi,
        }
    }

    fn needed(self, ap: bool) -> bool {
        ap || !matches!(self, Buf::PDom | Buf::PIc)
    }

    fn seeds(self, setup: &LossSetup) -> Seeds {
        let ap = setup.kind.is_ap();
        match self {
            Buf::FDom => {
                let fp = setup.spec.kind == CollisionKind::FokkerPlanck;
                Seeds::T | Seeds::X | Seeds::V | if fp { Seeds::VV } else { Seeds::empty() }
            }
            Buf::FDomNodes if ap => Seeds::X,
            Buf::PDom => Seeds::T,
            Buf::PhiDom | Buf::PhiIc => Seeds::X | Seeds::XX,
            _ => Seeds::empty(),
        }
    }
}

struct Ctx<'a> {
    setup: &'a LossSetup,
    batch: &'a CollocationBatch,
    h: &'a [f64],
    nodes: &'a [f64],
}

impl Ctx<'_> {
    fn rows(&self, b: Buf) -> usize {
        let n = self.nodes.len();
        match b {
            Buf::FDom | Buf::PDom | Buf::PhiDom => self.batch.dom.len(),
            Buf::FDomNodes => self.batch.dom.len() * n,
            Buf::FIc | Buf::PIc | Buf::PhiIc => self.batch.ic.len(),
            Buf::FIcNodes => self.batch.ic.len() * n,
        }
    }

    /// Sample index and `(t, x, v)` of row `r` of `b`.
    fn point(&self, b: Buf, r: usize) -> (usize, [f64; 3]) {
        let n = self.nodes.len();
        let d = &self.batch.dom;
        let ic = &self.batch.ic;
        match b {
            Buf::FDom => (self.batch.dom_sample[r], d[r]),
            Buf::FDomNodes => {
                let p = d[r / n];
                (self.batch.dom_sample[r / n], [p[0], p[1], self.nodes[r % n]])
            }
            Buf::PDom | Buf::PhiDom => (self.batch.dom_sample[r], [d[r][0], d[r][1], 0.0]),
            Buf::FIc => (self.batch.ic_sample[r], [0.0, ic[r][0], ic[r][1]]),
            Buf::FIcNodes => (self.batch.ic_sample[r / n], [0.0, ic[r / n][0], self.nodes[r % n]]),
            Buf::PIc | Buf::PhiIc => (self.batch.ic_sample[r], [0.0, ic[r][0], 0.0]),
        }
    }
}

/// A contiguous range of domain or initial points.
#[derive(Debug, Clone, Copy)]
enum Task {
    Dom(usize, usize),
    Ic(usize, usize),
}

const CHUNK: usize = 32;

fn tasks(batch: &CollocationBatch) -> Vec<Task> {
    let mut t = Vec::new();
    for a in (0..batch.dom.len()).step_by(CHUNK) {
        t.push(Task::Dom(a, (a + CHUNK).min(batch.dom.len())));
    }
    for a in (0..batch.ic.len()).step_by(CHUNK) {
        t.push(Task::Ic(a, (a + CHUNK).min(batch.ic.len())));
    }
    t
}

type Lift<'l, S> = dyn FnMut(Buf, usize) -> Result<Hyper<S>, ResidualError> + 'l;

/// Sums of squared residuals of one task, in [`LossBreakdown::NAMES`] order.
fn assemble<S: Real>(ctx: &Ctx, task: Task, lift: &mut Lift<'_, S>) -> Result<[S; 7], ResidualError> {
    let setup = ctx.setup;
    let ap = setup.kind.is_ap();
    let quad = &setup.spec.quad;
    let n = ctx.nodes.len();
    let mut sums = [S::zero(); 7];
    let mut add = |c: usize, r: S| sums[c] = sums[c] + r * r;
    match task {
        Task::Dom(a, b) => {
            for i in a..b {
                let p = ctx.batch.dom[i];
                let h = ctx.h[ctx.batch.dom_sample[i]];
                let f = lift(Buf::FDom, i)?;
                let nodes = (0..n).map(|j| lift(Buf::FDomNodes, i * n + j)).collect::<Result<Vec<_>, _>>()?;
                let node_vals: Vec<S> = nodes.iter().map(|x| x.val).collect();
                let phi = lift(Buf::PhiDom, i)?;
                let q = setup.spec.apply(&f, &node_vals, p[2])?;
                add(0, kinetic_residual(setup.eps.at(p[1])?, &f, &phi, p[2], q)?);
                if ap {
                    let rho = lift(Buf::PDom, i)?;
                    let flux = moment(&nodes, 1, quad)?;
                    add(1, mass_residual(&rho, &flux)?);
                    add(2, poisson_residual(&phi, rho.val, h)?);
                    add(3, consistency_residual(rho.val, &node_vals, quad)?);
                } else {
                    add(2, poisson_residual(&phi, moment(&node_vals, 0, quad)?, h)?);
                }
            }
        }
        Task::Ic(a, b) => {
            for i in a..b {
                let h = ctx.h[ctx.batch.ic_sample[i]];
                let f = lift(Buf::FIc, i)?.val;
                let node_vals =
                    (0..n).map(|j| lift(Buf::FIcNodes, i * n + j).map(|x| x.val)).collect::<Result<Vec<_>, _>>()?;
                let phi = lift(Buf::PhiIc, i)?;
                add(5, f - ctx.batch.ic_f0[i]);
                if ap {
                    let rho = lift(Buf::PIc, i)?.val;
                    add(4, consistency_residual(rho, &node_vals, quad)?);
                    add(6, poisson_residual(&phi, rho, h)?);
                } else {
                    add(6, poisson_residual(&phi, moment(&node_vals, 0, quad)?, h)?);
                }
            }
        }
    }
    Ok(sums)
}

fn counts(batch: &CollocationBatch) -> [f64; 7] {
    let d = batch.dom.len().max(1) as f64;
    let i = batch.ic.len().max(1) as f64;
    [d, d, d, d, i, i, i]
}

fn reduce(parts: &[[f64; 7]], batch: &CollocationBatch, kind: &LossKind) -> LossBreakdown {
    let n = counts(batch);
    let mut c = [0.0; 7];
    for p in parts {
        for k in 0..7 {
            c[k] += p[k];
        }
    }
    for k in 0..7 {
        c[k] /= n[k];
    }
    LossBreakdown::from_components(c, &kind.coefficients())
}

/// Loss of arbitrary fields (exact solutions, point-wise network
/// evaluation) on a batch; `h[s]` is the background charge of sample `s`.
pub fn loss_from_source(
    source: &dyn FieldSource,
    h: &[f64],
    batch: &CollocationBatch,
    setup: &LossSetup,
) -> Result<LossBreakdown, ResidualError> {
    batch.check(h.len())?;
    let ctx = Ctx { setup, batch, h, nodes: &setup.spec.quad.nodes };
    let parts = tasks(batch)
        .into_par_iter()
        .map(|task| {
            let mut lift = |b: Buf, r: usize| {
                let (s, p) = ctx.point(b, r);
                let seeds = b.seeds(setup);
                let t = Hyper::coordinate(p[0], Dir::T, seeds);
                let x = Hyper::coordinate(p[1], Dir::X, seeds);
                let v = Hyper::coordinate(p[2], Dir::V, seeds);
                let mut out = match b.net() {
                    NetKind::F => source.f(s, t, x, v)?,
                    NetKind::P => source.rho(s, t, x)?,
                    NetKind::Phi => source.phi(s, t, x)?,
                };
                out.seeds |= seeds;
                Ok(out)
            };
            assemble::<f64>(&ctx, task, &mut lift)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reduce(&parts, batch, &setup.kind))
}

#[derive(Debug, Clone)]
pub struct LossGradient {
    pub breakdown: LossBreakdown,
    /// Gradient of `breakdown.total`, laid out like the parameters.
    pub grad: OperatorTriple,
}

struct Forward {
    branches: Vec<Option<BranchState>>,
    outs: Vec<Option<(HBatch, TrunkCache)>>,
}

fn sensor_matrices(couples: &[InputCouple], used: &[usize]) -> Result<(Mat, Mat), ResidualError> {
    let l1 = couples[used[0]].f0_sensors.len();
    let l2 = couples[used[0]].h_sensors.len();
    let mut u1 = Mat::zeros(used.len(), l1);
    let mut u2 = Mat::zeros(used.len(), l2);
    for (r, &s) in used.iter().enumerate() {
        let c = &couples[s];
        if c.f0_sensors.len() != l1 || c.h_sensors.len() != l2 {
            return Err(ResidualError::InvalidInput(format!("couple {s} has inconsistent sensor counts")));
        }
        u1.data[r * l1..(r + 1) * l1].copy_from_slice(&c.f0_sensors);
        u2.data[r * l2..(r + 1) * l2].copy_from_slice(&c.h_sensors);
    }
    Ok((u1, u2))
}

fn forward(triple: &OperatorTriple, couples: &[InputCouple], ctx: &Ctx) -> Result<Forward, ResidualError> {
    let batch = ctx.batch;
    let mut used: Vec<usize> = batch.dom_sample.iter().chain(&batch.ic_sample).copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut compact = vec![usize::MAX; couples.len()];
    for (i, &s) in used.iter().enumerate() {
        compact[s] = i;
    }
    let ap = ctx.setup.kind.is_ap();
    let mut fw = Forward { branches: vec![None, None, None], outs: (0..BUFS.len()).map(|_| None).collect() };
    if used.is_empty() {
        return Ok(fw);
    }
    let (u1, u2) = sensor_matrices(couples, &used)?;
    for (k, kind) in NetKind::ALL.into_iter().enumerate() {
        if ap || kind != NetKind::P {
            fw.branches[k] = Some(triple.net(kind).branch_forward(&u1, &u2)?);
        }
    }
    for (bi, &b) in BUFS.iter().enumerate() {
        let rows = ctx.rows(b);
        if !b.needed(ap) || rows == 0 {
            continue;
        }
        let (mut pts, mut smp) = (Vec::with_capacity(rows), Vec::with_capacity(rows));
        for r in 0..rows {
            let (s, p) = ctx.point(b, r);
            pts.push(p);
            smp.push(compact[s]);
        }
        let k = b.net();
        let y = triple.trunk_batch(k, b.seeds(ctx.setup), &pts);
        let branches = fw.branches[k as usize].as_ref().expect("branch evaluated for every used net");
        fw.outs[bi] = Some(triple.net(k).trunk_forward(branches, &y, &smp)?);
    }
    Ok(fw)
}

fn lift_row<S: Real>(out: &HBatch, row: usize, positive: bool, mut make: impl FnMut(usize, f64) -> S) -> Hyper<S> {
    let mut h = Hyper::constant(S::zero());
    h.seeds = out.seeds;
    for c in 0..6 {
        if out.active(c) {
            let x = make(c, out.comp(c)[row]);
            match c {
                0 => h.val = x,
                1..=3 => h.grad[c - 1] = x,
                _ => h.hess[c - 4] = x,
            }
        }
    }
    if positive {
        h.softplus()
    } else {
        h
    }
}

fn buf_index(b: Buf) -> usize {
    BUFS.iter().position(|&x| x == b).unwrap()
}

/// Loss and its gradient with respect to every parameter of `triple`.
pub fn loss_and_gradient(
    triple: &OperatorTriple,
    couples: &[InputCouple],
    batch: &CollocationBatch,
    setup: &LossSetup,
) -> Result<LossGradient, ResidualError> {
    let (breakdown, grad) = evaluate(triple, couples, batch, setup, true)?;
    Ok(LossGradient { breakdown, grad: grad.expect("gradient requested") })
}

fn evaluate(
    triple: &OperatorTriple,
    couples: &[InputCouple],
    batch: &CollocationBatch,
    setup: &LossSetup,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<OperatorTriple>), ResidualError> {
    batch.check(couples.len())?;
    let h: Vec<f64> = couples.iter().map(|c| c.h).collect();
    let ctx = Ctx { setup, batch, h: &h, nodes: &setup.spec.quad.nodes };
    let fw = forward(triple, couples, &ctx)?;
    let out = |b: Buf| -> Result<&HBatch, ResidualError> {
        fw.outs[buf_index(b)]
            .as_ref()
            .map(|o| &o.0)
            .ok_or_else(|| ResidualError::InvalidInput(format!("{b:?} requested but not evaluated")))
    };
    let task_list = tasks(batch);
    if !want_grad {
        let parts = task_list
            .into_par_iter()
            .map(|task| {
                let mut lift = |b: Buf, r: usize| Ok(lift_row(out(b)?, r, b.net().positive(), |_, x| x));
                assemble::<f64>(&ctx, task, &mut lift)
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok((reduce(&parts, batch, &setup.kind), None));
    }

    let coef = setup.kind.coefficients();
    let n = counts(batch);
    let scale: [f64; 7] = std::array::from_fn(|k| coef[k] / n[k]);
    type Plan = Vec<(u8, u8, u32)>;
    let parts = task_list
        .into_par_iter()
        .map(|task| -> Result<([f64; 7], Plan, Vec<f64>), ResidualError> {
            let tape = Tape::with_capacity(1 << 14);
            let mut plan: Plan = Vec::new();
            let sums = {
                let mut lift = |b: Buf, r: usize| -> Result<Hyper<Var<'_>>, ResidualError> {
                    let bi = buf_index(b) as u8;
                    Ok(lift_row(out(b)?, r, b.net().positive(), |c, x| {
                        plan.push((bi, c as u8, r as u32));
                        tape.leaf(x)
                    }))
                };
                assemble::<Var<'_>>(&ctx, task, &mut lift)?
            };
            let objective = sums.iter().zip(&scale).fold(Var::constant(0.0), |acc, (s, &w)| acc + *s * w);
            let vals = sums.map(|s| s.val());
            if objective.is_constant() {
                return Ok((vals, Vec::new(), Vec::new()));
            }
            let adj = reverse_sweep(&tape, objective)?;
            Ok((vals, plan, adj))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut adjs: Vec<Option<HBatch>> = fw
        .outs
        .iter()
        .map(|o| o.as_ref().map(|(b, _)| HBatch::zeros(b.rows, 1, b.seeds)))
        .collect();
    let mut sums = Vec::with_capacity(parts.len());
    for (vals, plan, adj) in &parts {
        sums.push(*vals);
        for (&(bi, c, r), &g) in plan.iter().zip(adj) {
            if let Some(a) = adjs[bi as usize].as_mut() {
                a.comp_mut(c as usize)[r as usize] += g;
            }
        }
    }
    let breakdown = reduce(&sums, batch, &setup.kind);

    let mut grad = triple.zeros_like();
    let mut branch_adj: Vec<Option<BranchAdjoint>> =
        fw.branches.iter().map(|b| b.as_ref().map(BranchAdjoint::zeros)).collect();
    for (bi, &b) in BUFS.iter().enumerate() {
        let (Some((_, cache)), Some(adj)) = (&fw.outs[bi], &adjs[bi]) else { continue };
        let k = b.net();
        let ki = k as usize;
        let branches = fw.branches[ki].as_ref().expect("branch state");
        let badj = branch_adj[ki].as_mut().expect("branch adjoint");
        triple.net(k).trunk_backward(branches, cache, adj, grad.net_mut(k), badj);
    }
    for k in NetKind::ALL {
        let ki = k as usize;
        if let (Some(state), Some(adj)) = (&fw.branches[ki], &branch_adj[ki]) {
            triple.net(k).branch_backward(state, adj, grad.net_mut(k));
        }
    }
    Ok((breakdown, Some(grad)))
}

/// Loss of `triple` under an arbitrary setup, without the gradient.
pub fn loss_value(
    triple: &OperatorTriple,
    couples: &[InputCouple],
    batch: &CollocationBatch,
    setup: &LossSetup,
) -> Result<LossBreakdown, ResidualError> {
    Ok(evaluate(triple, couples, batch, setup, false)?.0)
}

/// AP loss of the three networks on `batch`.
pub fn ap_loss(
    triple: &OperatorTriple,
    couples: &[InputCouple],
    batch: &CollocationBatch,
    weights: PenaltyWeights,
    eps: EpsProfile,
    spec: &CollisionSpec,
) -> Result<LossBreakdown, ResidualError> {
    let setup = LossSetup { kind: LossKind::Ap(weights), eps, spec: spec.clone() };
    Ok(evaluate(triple, couples, batch, &setup, false)?.0)
}

/// Baseline loss of `F` and `Φ` only; the density is `⟨F⟩`.
pub fn pi_loss(
    triple: &OperatorTriple,
    couples: &[InputCouple],
    batch: &CollocationBatch,
    weights: PiWeights,
    eps: EpsProfile,
    spec: &CollisionSpec,
) -> Result<LossBreakdown, ResidualError> {
    let setup = LossSetup { kind: LossKind::Pi(weights), eps, spec: spec.clone() };
    Ok(evaluate(triple, couples, batch, &setup, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{maxwellian, CrossSection, VelocityQuadrature};
    use crate::networks::TripleConfig;
    use crate::residuals::{initial_conditions, InitialData, PhaseDomain, ProblemId};
    use crate::training::{InputCouple, SensorGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const GRID: SensorGrid = SensorGrid { sensors_x: 4, sensors_v: 3 };

    fn domain() -> PhaseDomain {
        PhaseDomain { t_max: 1.0, x_min: 0.0, x_max: 4.0 * PI, v_min: -6.0, v_max: 6.0 }
    }

    fn tiny() -> TripleConfig {
        TripleConfig { width: 6, depth: 2, latent: 4, sensors_x: 4, sensors_v: 3, modes: 1 }
    }

    fn spec(kind: CollisionKind, n: usize) -> CollisionSpec {
        CollisionSpec::new(kind, CrossSection::Gaussian, VelocityQuadrature::gauss_legendre(n, -6.0, 6.0).unwrap())
    }

    fn setup_for(kind: LossKind, coll: CollisionKind, eps: f64) -> LossSetup {
        LossSetup { kind, eps: EpsProfile::Constant { epsilon: eps }, spec: spec(coll, 6) }
    }

    fn couples(n: usize) -> (Vec<InputCouple>, Vec<InitialData>) {
        (0..n)
            .map(|i| {
                let init = initial_conditions(ProblemId::Landau, 0.95 + 0.05 * i as f64, 0.05, 0.5).unwrap();
                (InputCouple::from_initial(&init, GRID, &domain()), init)
            })
            .unzip()
    }

    fn batch(init: &[InitialData], n_dom: usize, n_ic: usize, seed: u64) -> CollocationBatch {
        CollocationBatch::sample(&domain(), init, n_dom, n_ic, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn ap() -> LossKind {
        LossKind::Ap(PenaltyWeights { lambda1: 2.0, lambda2: 1.5, lambda3_rho: 0.7, lambda3_f: 1.2, lambda3_phi: 0.9, lambda4: 0.0 })
    }

    #[test]
    fn batched_matches_pointwise_evaluation() {
        let tri = OperatorTriple::init(5, &tiny(), 4.0 * PI).unwrap();
        let (u, init) = couples(3);
        let b = batch(&init, 20, 10, 1);
        let h: Vec<f64> = u.iter().map(|c| c.h).collect();
        for kind in [ap(), LossKind::Pi(PiWeights { mu1: 1.3, mu2: 0.6, mu3: 0.0 })] {
            for coll in [CollisionKind::FokkerPlanck, CollisionKind::Isotropic, CollisionKind::Degenerate] {
                let s = setup_for(kind, coll, 0.3);
                let fast = evaluate(&tri, &u, &b, &s, false).unwrap().0;
                let slow = loss_from_source(&TripleSource { triple: &tri, couples: &u }, &h, &b, &s).unwrap();
                let with_grad = loss_and_gradient(&tri, &u, &b, &s).unwrap().breakdown;
                for ((a, c), g) in fast.components().iter().zip(slow.components()).zip(with_grad.components()) {
                    assert!((a - c).abs() <= 1e-10 * c.abs().max(1e-12), "{kind:?} {coll:?}: {a} vs {c}");
                    assert!((a - g).abs() <= 1e-12 * a.abs().max(1e-12));
                }
                assert!((fast.total - slow.total).abs() <= 1e-10 * slow.total);
            }
        }
    }

    fn fd_check(tri: &OperatorTriple, u: &[InputCouple], b: &CollocationBatch, s: &LossSetup) -> (usize, usize) {
        let g = loss_and_gradient(tri, u, b, s).unwrap().grad.flat_params();
        let mut p = tri.flat_params();
        let mut work = tri.clone();
        let mut bad = 0;
        // entries far below the largest one sit at the roundoff floor of the stencil
        let floor = 1e-7 * g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut at = |p: &mut Vec<f64>, i: usize, x: f64| {
            let x0 = p[i];
            p[i] = x;
            work.set_flat_params(p).unwrap();
            p[i] = x0;
            evaluate(&work, u, b, s, false).unwrap().0.total
        };
        for i in 0..p.len() {
            let x0 = p[i];
            let step = 1e-3 * x0.abs().max(1.0);
            // fourth-order stencil
            let fd = (8.0 * (at(&mut p, i, x0 + step) - at(&mut p, i, x0 - step))
                - (at(&mut p, i, x0 + 2.0 * step) - at(&mut p, i, x0 - 2.0 * step)))
                / (12.0 * step);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(floor);
            if rel >= 1e-4 {
                bad += 1;
            }
        }
        (bad, p.len())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tri = OperatorTriple::init(2, &tiny(), 4.0 * PI).unwrap();
        let (u, init) = couples(2);
        let b = batch(&init, 16, 8, 3);
        for (kind, coll) in [
            (ap(), CollisionKind::FokkerPlanck),
            (ap(), CollisionKind::Degenerate),
            (LossKind::Pi(PiWeights::default()), CollisionKind::NonDegenerate),
        ] {
            let (bad, n) = fd_check(&tri, &u, &b, &setup_for(kind, coll, 0.5));
            assert!(bad * 100 <= n, "{kind:?} {coll:?}: {bad} of {n} parameters disagree");
        }
    }

    /// Uniform equilibrium `f = h M`, `ρ = h ⟨M⟩`, `φ = 0`.
    struct Uniform {
        h: f64,
        mass: f64,
    }

    impl FieldSource for Uniform {
        fn f(&self, _: usize, _: HyperScalar, _: HyperScalar, v: HyperScalar) -> Result<HyperScalar, ResidualError> {
            Ok(maxwellian(v) * self.h)
        }
        fn rho(&self, _: usize, _: HyperScalar, _: HyperScalar) -> Result<HyperScalar, ResidualError> {
            Ok(Hyper::constant(self.h * self.mass))
        }
        fn phi(&self, _: usize, _: HyperScalar, _: HyperScalar) -> Result<HyperScalar, ResidualError> {
            Ok(Hyper::constant(0.0))
        }
    }

    #[test]
    fn uniform_equilibrium_annihilates_every_term() {
        let h = 1.0;
        let s = setup_for(ap(), CollisionKind::FokkerPlanck, 0.1);
        let mass = s.spec.quad.integrate(maxwellian);
        let src = Uniform { h, mass };
        let init: Vec<InitialData> = vec![initial_conditions(ProblemId::Landau, h, 0.0, 0.5).unwrap()];
        let mut b = batch(&init, 64, 32, 9);
        // the IC target is the same equilibrium
        b.ic_f0 = b.ic.iter().map(|p| h * maxwellian(p[1])).collect();
        // background charge equal to the discrete density keeps Poisson exact
        let hs = [h * mass];
        for eps in [1.0, 1e-3, 0.0] {
            let s = LossSetup { eps: EpsProfile::Constant { epsilon: eps }, ..s.clone() };
            let l = loss_from_source(&src, &hs, &b, &s).unwrap();
            assert!(l.components().iter().all(|&c| c < 1e-10), "{l:?}");
            let pi = LossSetup { kind: LossKind::Pi(PiWeights::default()), ..s.clone() };
            let l = loss_from_source(&src, &hs, &b, &pi).unwrap();
            assert!(l.components().iter().all(|&c| c < 1e-10), "{l:?}");
        }
    }

    #[test]
    fn zero_networks_consistency_oracle() {
        let mut tri = OperatorTriple::init(1, &tiny(), 4.0 * PI).unwrap();
        tri.visit_mut(|p| p.fill(0.0));
        let (u, init) = couples(2);
        let b = batch(&init, 10, 5, 4);
        let s = setup_for(ap(), CollisionKind::FokkerPlanck, 1.0);
        let l = evaluate(&tri, &u, &b, &s, false).unwrap().0;
        let ln2 = std::f64::consts::LN_2;
        let expect = (ln2 * 12.0 - ln2).powi(2);
        assert!((l.consistency - expect).abs() < 1e-12 * expect);
        assert!((l.ic_rho - expect).abs() < 1e-12 * expect);
        // Fokker-Planck maps a constant to itself, so the kinetic residual is -ln 2
        assert!((l.kinetic - ln2 * ln2).abs() < 1e-12);
        assert!(l.mass.abs() < 1e-30);
    }

    #[test]
    fn weights_scale_their_terms_only() {
        let tri = OperatorTriple::init(7, &tiny(), 4.0 * PI).unwrap();
        let (u, init) = couples(2);
        let b = batch(&init, 12, 6, 5);
        let w = PenaltyWeights::default();
        let s1 = setup_for(LossKind::Ap(w), CollisionKind::Isotropic, 0.2);
        let s2 = setup_for(LossKind::Ap(PenaltyWeights { lambda1: 2.0, ..w }), CollisionKind::Isotropic, 0.2);
        let a = evaluate(&tri, &u, &b, &s1, false).unwrap().0;
        let c = evaluate(&tri, &u, &b, &s2, false).unwrap().0;
        assert_eq!(a.components(), c.components());
        let pde = a.kinetic + a.mass + a.poisson;
        assert!((c.total - a.total - pde).abs() < 1e-12 * c.total);
    }

    #[test]
    fn baseline_shares_the_kinetic_term() {
        let tri = OperatorTriple::init(8, &tiny(), 4.0 * PI).unwrap();
        let (u, init) = couples(2);
        let b = batch(&init, 12, 6, 6);
        let sp = spec(CollisionKind::NonDegenerate, 6);
        let eps = EpsProfile::Constant { epsilon: 0.05 };
        let a = ap_loss(&tri, &u, &b, PenaltyWeights::default(), eps, &sp).unwrap();
        let p = pi_loss(&tri, &u, &b, PiWeights::default(), eps, &sp).unwrap();
        assert_eq!(a.kinetic, p.kinetic);
        assert_eq!((p.mass, p.consistency, p.ic_rho), (0.0, 0.0, 0.0));
        assert_eq!(a.ic_f, p.ic_f);
    }

    /// `F = h M(v) (1 + g(x, v) t)`: at ε = 0 no time derivative enters the
    /// baseline loss, so its value at `t = 0` points does not depend on `g`.
    struct Probe {
        g: f64,
    }

    impl FieldSource for Probe {
        fn f(&self, _: usize, t: HyperScalar, x: HyperScalar, v: HyperScalar) -> Result<HyperScalar, ResidualError> {
            Ok(maxwellian(v) * (t * x.cos() * self.g + 1.0))
        }
        fn rho(&self, _: usize, _: HyperScalar, _: HyperScalar) -> Result<HyperScalar, ResidualError> {
            Ok(Hyper::constant(1.0))
        }
        fn phi(&self, _: usize, _: HyperScalar, x: HyperScalar) -> Result<HyperScalar, ResidualError> {
            Ok(x.sin() * 0.1)
        }
    }

    #[test]
    fn baseline_limit_has_no_time_derivative() {
        let init = vec![initial_conditions(ProblemId::Landau, 1.0, 0.05, 0.5).unwrap()];
        let mut b = batch(&init, 30, 10, 2);
        for p in &mut b.dom {
            p[0] = 0.0;
        }
        let s = setup_for(LossKind::Pi(PiWeights::default()), CollisionKind::FokkerPlanck, 0.0);
        let a = loss_from_source(&Probe { g: 0.0 }, &[1.0], &b, &s).unwrap();
        let c = loss_from_source(&Probe { g: 3.0 }, &[1.0], &b, &s).unwrap();
        assert_eq!(a.kinetic, c.kinetic);
        let s1 = LossSetup { eps: EpsProfile::Constant { epsilon: 0.5 }, ..s };
        let a = loss_from_source(&Probe { g: 0.0 }, &[1.0], &b, &s1).unwrap();
        let c = loss_from_source(&Probe { g: 3.0 }, &[1.0], &b, &s1).unwrap();
        assert_ne!(a.kinetic, c.kinetic);
    }

    #[test]
    fn loss_is_deterministic_and_nonnegative() {
        let tri = OperatorTriple::init(3, &tiny(), 4.0 * PI).unwrap();
        let (u, init) = couples(3);
        let b = batch(&init, 70, 40, 8);
        let s = setup_for(ap(), CollisionKind::Degenerate, 0.01);
        let a = loss_and_gradient(&tri, &u, &b, &s).unwrap();
        let c = loss_and_gradient(&tri, &u, &b, &s).unwrap();
        assert_eq!(a.breakdown, c.breakdown);
        assert_eq!(a.grad.flat_params(), c.grad.flat_params());
        assert!(a.breakdown.components().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn bad_sample_index_rejected() {
        let tri = OperatorTriple::init(3, &tiny(), 4.0 * PI).unwrap();
        let (u, init) = couples(3);
        let b = batch(&init, 5, 5, 8);
        let s = setup_for(ap(), CollisionKind::Isotropic, 1.0);
        assert!(evaluate(&tri, &u[..1], &b, &s, false).is_err());
    }
}
