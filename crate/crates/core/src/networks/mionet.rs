//! Multiple-input DeepONet with two branch nets and one trunk net combined by
//! a latent triple product, `G(u1, u2)(y) = sum_j b1_j(u1) b2_j(u2) t_j(y) + b0`.

use super::batch::{HBatch, Mat};
use super::mlp::{glorot_init, MlpCache, ModifiedMlpParams};
use super::NetworkError;
use crate::diffcore::{Hyper, HyperScalar, Seeds};

#[derive(Debug, Clone, PartialEq)]
pub struct MionetParams {
    pub branch1: ModifiedMlpParams,
    pub branch2: ModifiedMlpParams,
    pub trunk: ModifiedMlpParams,
    pub b0: f64,
}

/// Branch outputs for a set of samples, shared by every trunk batch of one
/// loss evaluation.
#[derive(Debug, Clone)]
pub struct BranchState {
    pub b1: Mat,
    pub b2: Mat,
    cache1: MlpCache,
    cache2: MlpCache,
}

/// Adjoints of the branch outputs, accumulated across trunk batches.
#[derive(Debug, Clone)]
pub struct BranchAdjoint {
    pub b1: Mat,
    pub b2: Mat,
}

#[derive(Debug, Clone)]
pub struct TrunkCache {
    trunk: MlpCache,
    t: HBatch,
    sample_of_row: Vec<usize>,
}

impl MionetParams {
    /// Three independently seeded sub-networks with latent width `p`.
    pub fn init(
        seed: u64,
        branch1_sizes: &[usize],
        branch2_sizes: &[usize],
        trunk_sizes: &[usize],
    ) -> Result<Self, NetworkError> {
        let p = *trunk_sizes.last().unwrap_or(&0);
        for s in [branch1_sizes, branch2_sizes] {
            if s.last() != Some(&p) {
                return Err(NetworkError::Sizes(format!(
                    "branch output width {:?} differs from trunk latent width {p}",
                    s.last()
                )));
            }
        }
        Ok(MionetParams {
            branch1: glorot_init(seed.wrapping_mul(3).wrapping_add(1), branch1_sizes)?,
            branch2: glorot_init(seed.wrapping_mul(3).wrapping_add(2), branch2_sizes)?,
            trunk: glorot_init(seed.wrapping_mul(3).wrapping_add(3), trunk_sizes)?,
            b0: 0.0,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|s| s.fill(0.0));
        z
    }

    pub fn latent(&self) -> usize {
        self.trunk.output_dim()
    }

    pub fn visit(&self, mut f: impl FnMut(&[f64])) {
        self.branch1.visit(&mut f);
        self.branch2.visit(&mut f);
        self.trunk.visit(&mut f);
        f(std::slice::from_ref(&self.b0));
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        self.branch1.visit_mut(&mut f);
        self.branch2.visit_mut(&mut f);
        self.trunk.visit_mut(&mut f);
        f(std::slice::from_mut(&mut self.b0));
    }

    /// Value-only branch evaluation; rows of `u1`, `u2` are samples.
    pub fn branch_forward(&self, u1: &Mat, u2: &Mat) -> Result<BranchState, NetworkError> {
        if u1.rows != u2.rows {
            return Err(NetworkError::Shape { what: "branch sample count", expected: u1.rows, got: u2.rows });
        }
        let (o1, cache1) = self.branch1.forward_batch(&HBatch::from_values(u1.clone()))?;
        let (o2, cache2) = self.branch2.forward_batch(&HBatch::from_values(u2.clone()))?;
        let p = self.latent();
        Ok(BranchState {
            b1: Mat { rows: u1.rows, cols: p, data: o1.values().to_vec() },
            b2: Mat { rows: u2.rows, cols: p, data: o2.values().to_vec() },
            cache1,
            cache2,
        })
    }

    /// Trunk evaluation at embedded coordinates `y`; row `r` belongs to sample
    /// `sample_of_row[r]` of `branches`. Returns an `R x 1` batch.
    pub fn trunk_forward(
        &self,
        branches: &BranchState,
        y: &HBatch,
        sample_of_row: &[usize],
    ) -> Result<(HBatch, TrunkCache), NetworkError> {
        if sample_of_row.len() != y.rows {
            return Err(NetworkError::Shape { what: "trunk row map", expected: y.rows, got: sample_of_row.len() });
        }
        if let Some(&s) = sample_of_row.iter().find(|&&s| s >= branches.b1.rows) {
            return Err(NetworkError::Shape { what: "trunk sample index", expected: branches.b1.rows, got: s });
        }
        let (t, trunk) = self.trunk.forward_batch(y)?;
        let p = self.latent();
        let mut out = HBatch::zeros(y.rows, 1, y.seeds);
        for c in 0..6 {
            if !out.active(c) {
                continue;
            }
            let tc = t.comp(c);
            let oc = out.comp_mut(c);
            for (r, &s) in sample_of_row.iter().enumerate() {
                let b1 = &branches.b1.data[s * p..(s + 1) * p];
                let b2 = &branches.b2.data[s * p..(s + 1) * p];
                let tr = &tc[r * p..(r + 1) * p];
                let mut acc = if c == 0 { self.b0 } else { 0.0 };
                for j in 0..p {
                    acc += b1[j] * b2[j] * tr[j];
                }
                oc[r] = acc;
            }
        }
        Ok((out, TrunkCache { trunk, t, sample_of_row: sample_of_row.to_vec() }))
    }

    /// Reverse pass of [`trunk_forward`](Self::trunk_forward): trunk and `b0`
    /// adjoints go to `grads`, branch-output adjoints to `branch_adj`.
    pub fn trunk_backward(
        &self,
        branches: &BranchState,
        cache: &TrunkCache,
        out_adj: &HBatch,
        grads: &mut MionetParams,
        branch_adj: &mut BranchAdjoint,
    ) {
        let p = self.latent();
        let t = &cache.t;
        let mut t_adj = HBatch::zeros(t.rows, p, t.seeds);
        for c in 0..6 {
            if !t.active(c) {
                continue;
            }
            let oc = out_adj.comp(c);
            let tc = t.comp(c);
            if c == 0 {
                grads.b0 += oc.iter().sum::<f64>();
            }
            let ta = t_adj.comp_mut(c);
            for (r, &s) in cache.sample_of_row.iter().enumerate() {
                let g = oc[r];
                if g == 0.0 {
                    continue;
                }
                for j in 0..p {
                    let b1 = branches.b1.data[s * p + j];
                    let b2 = branches.b2.data[s * p + j];
                    let tv = tc[r * p + j];
                    ta[r * p + j] = b1 * b2 * g;
                    branch_adj.b1.data[s * p + j] += b2 * tv * g;
                    branch_adj.b2.data[s * p + j] += b1 * tv * g;
                }
            }
        }
        self.trunk.backward_batch(&cache.trunk, &t_adj, &mut grads.trunk);
    }

    pub fn branch_backward(&self, branches: &BranchState, adj: &BranchAdjoint, grads: &mut MionetParams) {
        self.branch1
            .backward_batch(&branches.cache1, &HBatch::from_values(adj.b1.clone()), &mut grads.branch1);
        self.branch2
            .backward_batch(&branches.cache2, &HBatch::from_values(adj.b2.clone()), &mut grads.branch2);
    }
}

impl BranchAdjoint {
    pub fn zeros(state: &BranchState) -> Self {
        BranchAdjoint {
            b1: Mat::zeros(state.b1.rows, state.b1.cols),
            b2: Mat::zeros(state.b2.rows, state.b2.cols),
        }
    }
}

/// Evaluate one MIONet at one embedded coordinate vector.
///
/// Branch inputs are constants per sample, so derivative components flow
/// through the trunk only.
pub fn mionet_eval(
    net: &MionetParams,
    u1: &[f64],
    u2: &[f64],
    y: &[HyperScalar],
) -> Result<HyperScalar, NetworkError> {
    let branches = net.branch_forward(
        &Mat { rows: 1, cols: u1.len(), data: u1.to_vec() },
        &Mat { rows: 1, cols: u2.len(), data: u2.to_vec() },
    )?;
    let seeds = y.iter().fold(Seeds::empty(), |s, h| s | h.seeds);
    let mut yb = HBatch::zeros(1, y.len(), seeds);
    for (c, h) in y.iter().enumerate() {
        let mut h = *h;
        h.seeds = seeds;
        yb.set(0, c, &h);
    }
    let (out, _) = net.trunk_forward(&branches, &yb, &[0])?;
    let mut r: Hyper<f64> = out.get(0, 0);
    r.seeds = seeds;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{seed_coordinates, Dir, Pair, Real};

    fn net(p: usize) -> MionetParams {
        MionetParams::init(4, &[6, 8, 8, p], &[3, 8, 8, p], &[3, 8, 8, p]).unwrap()
    }

    /// Force a modified MLP to output the constant vector `c` (zero weights,
    /// final bias = c).
    fn constant_output(m: &mut ModifiedMlpParams, c: &[f64]) {
        m.visit_mut(|s| s.fill(0.0));
        let k = m.bz.len() - 1;
        m.bz[k].copy_from_slice(c);
    }

    #[test]
    fn hand_set_triple_product() {
        let mut n = net(2);
        constant_output(&mut n.branch1, &[1.0, 2.0]);
        constant_output(&mut n.branch2, &[3.0, 4.0]);
        constant_output(&mut n.trunk, &[5.0, 6.0]);
        n.b0 = 1.0;
        let y = [Hyper::constant(0.1), Hyper::constant(0.2), Hyper::constant(0.3)];
        let out = mionet_eval(&n, &[0.0; 6], &[0.0; 3], &y).unwrap();
        assert_eq!(out.val, 64.0);
    }

    #[test]
    fn unit_branches_sum_the_trunk() {
        let mut n = net(4);
        constant_output(&mut n.branch1, &[1.0; 4]);
        constant_output(&mut n.branch2, &[1.0; 4]);
        n.b0 = 0.25;
        let (t, x, _) = seed_coordinates(0.2, 0.7, 0.0, &[Dir::T, Dir::X], &[Pair::XX]).unwrap();
        let y = [t, x.cos(), x.sin()];
        let out = mionet_eval(&n, &[0.3; 6], &[0.1; 3], &y).unwrap();
        let t_out = super::super::mlp::modified_mlp_forward(&n.trunk, &y).unwrap();
        let sum = t_out.iter().fold(Hyper::constant(0.25), |a, b| a + *b);
        assert!((out.val - sum.val).abs() < 1e-14);
        assert!((out.d(Dir::X) - sum.d(Dir::X)).abs() < 1e-14);
        assert!((out.dd(Pair::XX) - sum.dd(Pair::XX)).abs() < 1e-14);
    }

    #[test]
    fn bias_only_network_is_constant() {
        let mut n = net(3);
        n.visit_mut(|s| s.fill(0.0));
        n.b0 = -0.7;
        let (t, x, _) = seed_coordinates(0.2, 0.7, 0.0, &[Dir::T, Dir::X], &[Pair::XX]).unwrap();
        let out = mionet_eval(&n, &[0.3; 6], &[0.1; 3], &[t, x.cos(), x.sin()]).unwrap();
        assert_eq!(out.val, -0.7);
        assert_eq!(out.grad, [0.0; 3]);
        assert_eq!(out.hess, [0.0; 2]);
    }

    #[test]
    fn shape_errors() {
        let n = net(2);
        let y = [Hyper::constant(0.0); 3];
        assert!(mionet_eval(&n, &[0.0; 5], &[0.0; 3], &y).is_err());
        assert!(mionet_eval(&n, &[0.0; 6], &[0.0; 3], &y[..2]).is_err());
        assert!(MionetParams::init(0, &[6, 8, 3], &[3, 8, 2], &[3, 8, 2]).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences_in_coordinates() {
        let n = net(5);
        let u1 = [0.1, 0.4, -0.2, 0.3, 0.8, 0.05];
        let u2 = [1.0, 0.95, 1.05];
        let f = |t: f64, x: f64| {
            let y = [Hyper::constant(t), Hyper::constant(x.cos()), Hyper::constant(x.sin())];
            mionet_eval(&n, &u1, &u2, &y).unwrap().val
        };
        let (t0, x0) = (0.35, 1.1);
        let (t, x, _) = seed_coordinates(t0, x0, 0.0, &[Dir::T, Dir::X], &[Pair::XX]).unwrap();
        let out = mionet_eval(&n, &u1, &u2, &[t, x.cos(), x.sin()]).unwrap();
        let h = 1e-4;
        let ft = (f(t0 + h, x0) - f(t0 - h, x0)) / (2.0 * h);
        let fx = (f(t0, x0 + h) - f(t0, x0 - h)) / (2.0 * h);
        let fxx = (f(t0, x0 + h) - 2.0 * f(t0, x0) + f(t0, x0 - h)) / (h * h);
        assert!((out.d(Dir::T) - ft).abs() <= 1e-5 * ft.abs().max(1e-3));
        assert!((out.d(Dir::X) - fx).abs() <= 1e-5 * fx.abs().max(1e-3));
        assert!((out.dd(Pair::XX) - fxx).abs() <= 1e-5 * fxx.abs().max(1e-2));
    }
}
