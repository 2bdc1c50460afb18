//! Modified multilayer perceptron: two transformer branches `U`, `V` and
//! gated mixing of the hidden state,
//!
//! ```text
//! U = s(X W1 + b1)      V = s(X W2 + b2)      H1 = s(X Wz0 + bz0)
//! Z_k = s(H_k Wz_k + bz_k)
//! H_{k+1} = (1 - Z_k) * U + Z_k * V           k = 1..K-1
//! out = H_K Wz_K + bz_K
//! ```
//!
//! with `s` = swish. Layer sizes are `[m0, m1, .., mK, out]`, all hidden
//! widths equal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::batch::{
    affine_backward, affine_forward, product_backward_factor, product_forward, sub, swish_backward,
    swish_forward, HBatch, Mat,
};
use super::NetworkError;
use crate::diffcore::{HyperScalar, Seeds};

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedMlpParams {
    sizes: Vec<usize>,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub wz: Vec<Mat>,
    pub bz: Vec<Vec<f64>>,
}

/// Intermediate activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    x: HBatch,
    pre_u: HBatch,
    pre_v: HBatch,
    u: HBatch,
    v: HBatch,
    pre_h1: HBatch,
    /// `H_1 .. H_K`
    h: Vec<HBatch>,
    /// `(pre_Z_k, Z_k)` for k = 1..K-1
    z: Vec<(HBatch, HBatch)>,
}

fn validate_sizes(sizes: &[usize]) -> Result<(), NetworkError> {
    if sizes.len() < 3 {
        return Err(NetworkError::Sizes(format!(
            "need at least [input, hidden, output], got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(NetworkError::Sizes(format!("zero layer size in {sizes:?}")));
    }
    let hidden = &sizes[1..sizes.len() - 1];
    if hidden.iter().any(|&m| m != hidden[0]) {
        return Err(NetworkError::Sizes(format!("hidden widths must be equal: {sizes:?}")));
    }
    Ok(())
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Mat { rows, cols, data: (0..rows * cols).map(|_| normal.sample(rng)).collect() }
}

/// Glorot-normal weights, zero biases; deterministic in `seed`.
pub fn glorot_init(seed: u64, sizes: &[usize]) -> Result<ModifiedMlpParams, NetworkError> {
    validate_sizes(sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m0, m1) = (sizes[0], sizes[1]);
    let w1 = glorot(&mut rng, m0, m1);
    let w2 = glorot(&mut rng, m0, m1);
    let mut wz = Vec::new();
    let mut bz = Vec::new();
    for pair in sizes.windows(2) {
        wz.push(glorot(&mut rng, pair[0], pair[1]));
        bz.push(vec![0.0; pair[1]]);
    }
    Ok(ModifiedMlpParams { sizes: sizes.to_vec(), w1, b1: vec![0.0; m1], w2, b2: vec![0.0; m1], wz, bz })
}

impl ModifiedMlpParams {
    /// All-zero parameters of the given shape.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NetworkError> {
        let mut p = glorot_init(0, sizes)?;
        p.visit_mut(|s| s.fill(0.0));
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Number of hidden states `K`.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 2
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(|s| n += s.len());
        n
    }

    /// Parameter arrays in canonical order: W1, b1, W2, b2, then Wz_k, bz_k.
    pub fn visit(&self, mut f: impl FnMut(&[f64])) {
        f(&self.w1.data);
        f(&self.b1);
        f(&self.w2.data);
        f(&self.b2);
        for (w, b) in self.wz.iter().zip(&self.bz) {
            f(&w.data);
            f(b);
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(&mut self.w1.data);
        f(&mut self.b1);
        f(&mut self.w2.data);
        f(&mut self.b2);
        for (w, b) in self.wz.iter_mut().zip(self.bz.iter_mut()) {
            f(&mut w.data);
            f(b);
        }
    }

    pub fn forward_batch(&self, x: &HBatch) -> Result<(HBatch, MlpCache), NetworkError> {
        if x.cols != self.input_dim() {
            return Err(NetworkError::Shape {
                what: "modified MLP input",
                expected: self.input_dim(),
                got: x.cols,
            });
        }
        let k = self.depth();
        let pre_u = affine_forward(x, &self.w1, &self.b1);
        let pre_v = affine_forward(x, &self.w2, &self.b2);
        let pre_h1 = affine_forward(x, &self.wz[0], &self.bz[0]);
        let u = swish_forward(&pre_u);
        let v = swish_forward(&pre_v);
        let d = sub(&v, &u);
        let mut h = vec![swish_forward(&pre_h1)];
        let mut z = Vec::with_capacity(k.saturating_sub(1));
        for layer in 1..k {
            let pre_z = affine_forward(&h[layer - 1], &self.wz[layer], &self.bz[layer]);
            let zk = swish_forward(&pre_z);
            let mut next = product_forward(&zk, &d);
            next.add_assign(&u);
            z.push((pre_z, zk));
            h.push(next);
        }
        let out = affine_forward(&h[k - 1], &self.wz[k], &self.bz[k]);
        Ok((out, MlpCache { x: x.clone(), pre_u, pre_v, u, v, pre_h1, h, z }))
    }

    /// Accumulate parameter adjoints into `grads` given the output adjoint.
    pub fn backward_batch(&self, cache: &MlpCache, out_adj: &HBatch, grads: &mut ModifiedMlpParams) {
        let k = self.depth();
        let mut h_adj = affine_backward(
            &cache.h[k - 1],
            &self.wz[k],
            out_adj,
            &mut grads.wz[k],
            &mut grads.bz[k],
            true,
        )
        .expect("input adjoint requested");
        let mut u_adj = HBatch::zeros(cache.u.rows, cache.u.cols, cache.u.seeds);
        let mut v_adj = u_adj.clone();
        let d = sub(&cache.v, &cache.u);
        for layer in (1..k).rev() {
            // H_{layer+1} = U + Z * D
            let (pre_z, zk) = &cache.z[layer - 1];
            u_adj.add_assign(&h_adj);
            let z_adj = product_backward_factor(&d, &h_adj);
            let d_adj = product_backward_factor(zk, &h_adj);
            v_adj.add_assign(&d_adj);
            u_adj = sub(&u_adj, &d_adj);
            let pre_z_adj = swish_backward(pre_z, &z_adj);
            h_adj = affine_backward(
                &cache.h[layer - 1],
                &self.wz[layer],
                &pre_z_adj,
                &mut grads.wz[layer],
                &mut grads.bz[layer],
                true,
            )
            .expect("input adjoint requested");
        }
        let pre_h1_adj = swish_backward(&cache.pre_h1, &h_adj);
        affine_backward(&cache.x, &self.wz[0], &pre_h1_adj, &mut grads.wz[0], &mut grads.bz[0], false);
        let pre_u_adj = swish_backward(&cache.pre_u, &u_adj);
        affine_backward(&cache.x, &self.w1, &pre_u_adj, &mut grads.w1, &mut grads.b1, false);
        let pre_v_adj = swish_backward(&cache.pre_v, &v_adj);
        affine_backward(&cache.x, &self.w2, &pre_v_adj, &mut grads.w2, &mut grads.b2, false);
    }
}

/// Single-row forward pass on hyper-dual inputs.
pub fn modified_mlp_forward(
    params: &ModifiedMlpParams,
    input: &[HyperScalar],
) -> Result<Vec<HyperScalar>, NetworkError> {
    if input.len() != params.input_dim() {
        return Err(NetworkError::Shape {
            what: "modified MLP input",
            expected: params.input_dim(),
            got: input.len(),
        });
    }
    let seeds = input.iter().fold(Seeds::empty(), |s, h| s | h.seeds);
    let mut x = HBatch::zeros(1, input.len(), seeds);
    for (c, h) in input.iter().enumerate() {
        let mut h = *h;
        h.seeds = seeds;
        x.set(0, c, &h);
    }
    let (out, _) = params.forward_batch(&x)?;
    Ok((0..out.cols).map(|c| out.get(0, c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{seed_coordinates, swish_derivs, Dir, Hyper, Pair, Real};

    fn checksum(p: &ModifiedMlpParams) -> f64 {
        let mut s = 0.0;
        let mut i = 0.0;
        p.visit(|a| {
            for x in a {
                i += 1.0;
                s += x * i;
            }
        });
        s
    }

    #[test]
    fn glorot_is_deterministic_with_zero_biases() {
        let a = glorot_init(7, &[2, 64, 64, 1]).unwrap();
        let b = glorot_init(7, &[2, 64, 64, 1]).unwrap();
        assert_eq!(checksum(&a).to_bits(), checksum(&b).to_bits());
        assert_ne!(checksum(&a), checksum(&glorot_init(8, &[2, 64, 64, 1]).unwrap()));
        assert!(a.b1.iter().chain(&a.b2).chain(a.bz.iter().flatten()).all(|&b| b == 0.0));
    }

    #[test]
    fn glorot_variance_of_square_block() {
        let p = glorot_init(3, &[4, 64, 64, 64, 1]).unwrap();
        let w = &p.wz[1].data;
        assert_eq!(w.len(), 4096);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var - 2.0 / 128.0).abs() < 0.2 * 2.0 / 128.0, "var={var}");
    }

    #[test]
    fn size_validation() {
        assert!(glorot_init(0, &[2, 0, 1]).is_err());
        assert!(glorot_init(0, &[2, 1]).is_err());
        assert!(glorot_init(0, &[2, 8, 16, 1]).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let p = ModifiedMlpParams::zeros(&[3, 8, 8, 8, 2]).unwrap();
        let (t, x, v) =
            seed_coordinates(0.3, 0.5, -1.0, &[Dir::T, Dir::X, Dir::V], &[Pair::XX]).unwrap();
        let out = modified_mlp_forward(&p, &[t, x, v]).unwrap();
        for o in out {
            assert_eq!(o.val, 0.0);
            assert_eq!(o.grad, [0.0; 3]);
        }
    }

    #[test]
    fn depth_one_is_a_plain_two_layer_net() {
        let p = glorot_init(11, &[2, 5, 3]).unwrap();
        let x = [0.4, -1.2];
        let out = modified_mlp_forward(&p, &[Hyper::constant(x[0]), Hyper::constant(x[1])]).unwrap();
        for o in 0..3 {
            let mut expect = p.bz[1][o];
            for j in 0..5 {
                let pre = p.bz[0][j] + x[0] * p.wz[0].at(0, j) + x[1] * p.wz[0].at(1, j);
                expect += swish_derivs(pre)[0] * p.wz[1].at(j, o);
            }
            assert!((out[o].val - expect).abs() < 1e-14);
        }
    }

    /// Independent scalar evaluation of the update block for a 2-wide net.
    #[test]
    fn hand_computed_two_by_two() {
        let mut p = glorot_init(5, &[2, 2, 2, 1]).unwrap();
        p.b1 = vec![0.1, -0.2];
        p.b2 = vec![0.05, 0.3];
        p.bz[0] = vec![-0.1, 0.2];
        p.bz[1] = vec![0.15, -0.05];
        p.bz[2] = vec![0.4];
        let x = [0.7, -0.3];
        let s = |a: f64| a / (1.0 + (-a).exp());
        let lin = |w: &Mat, b: &[f64], inp: &[f64], j: usize| {
            b[j] + inp.iter().enumerate().map(|(i, xi)| xi * w.at(i, j)).sum::<f64>()
        };
        let u: Vec<f64> = (0..2).map(|j| s(lin(&p.w1, &p.b1, &x, j))).collect();
        let v: Vec<f64> = (0..2).map(|j| s(lin(&p.w2, &p.b2, &x, j))).collect();
        let h1: Vec<f64> = (0..2).map(|j| s(lin(&p.wz[0], &p.bz[0], &x, j))).collect();
        let z1: Vec<f64> = (0..2).map(|j| s(lin(&p.wz[1], &p.bz[1], &h1, j))).collect();
        let h2: Vec<f64> = (0..2).map(|j| (1.0 - z1[j]) * u[j] + z1[j] * v[j]).collect();
        let expect = lin(&p.wz[2], &p.bz[2], &h2, 0);
        let out = modified_mlp_forward(&p, &[Hyper::constant(x[0]), Hyper::constant(x[1])]).unwrap();
        assert!((out[0].val - expect).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = glorot_init(1, &[3, 4, 1]).unwrap();
        assert!(matches!(
            modified_mlp_forward(&p, &[Hyper::constant(1.0)]),
            Err(NetworkError::Shape { .. })
        ));
    }

    fn scalar_loss(p: &ModifiedMlpParams, x: &HBatch, w: &HBatch) -> f64 {
        let (out, _) = p.forward_batch(x).unwrap();
        (0..6)
            .filter(|&c| out.active(c))
            .map(|c| out.comp(c).iter().zip(w.comp(c)).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let sizes = [3, 6, 6, 6, 2];
        let p = glorot_init(9, &sizes).unwrap();
        let seeds = Seeds::T | Seeds::X | Seeds::V | Seeds::XX | Seeds::VV;
        let mut x = HBatch::zeros(4, 3, seeds);
        let mut w = HBatch::zeros(4, 2, seeds);
        for r in 0..4 {
            let (t, xx, v) = seed_coordinates(
                0.1 * r as f64,
                0.5 - 0.3 * r as f64,
                0.2 + r as f64,
                &[Dir::T, Dir::X, Dir::V],
                &[Pair::XX, Pair::VV],
            )
            .unwrap();
            x.set(r, 0, &t);
            x.set(r, 1, &xx.sin());
            x.set(r, 2, &(v * xx));
            for c in 0..2 {
                let mut h = Hyper::constant(((r + c) as f64).cos());
                h.seeds = seeds;
                h.grad = [0.3, -0.2 * c as f64, 0.7];
                h.hess = [0.5, -0.4];
                w.set(r, c, &h);
            }
        }
        let (_, cache) = p.forward_batch(&x).unwrap();
        let mut grads = ModifiedMlpParams::zeros(&sizes).unwrap();
        p.backward_batch(&cache, &w, &mut grads);
        let mut flat_g = Vec::new();
        grads.visit(|a| flat_g.extend_from_slice(a));
        let mut flat_p = Vec::new();
        p.visit(|a| flat_p.extend_from_slice(a));
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..flat_p.len() {
            let eval = |delta: f64| {
                let mut q = p.clone();
                let mut k = 0;
                q.visit_mut(|a| {
                    for v in a.iter_mut() {
                        if k == i {
                            *v += delta;
                        }
                        k += 1;
                    }
                });
                scalar_loss(&q, &x, &w)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (fd - flat_g[i]).abs() / fd.abs().max(flat_g[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
        let _ = Real::value(&1.0);
    }
}
