//! Row-batched hyper-dual activations and the layer kernels of the modified
//! MLP, with their reverse passes.
//!
//! A [`HBatch`] stores one row-major `rows x cols` matrix per live payload
//! component (value, three gradients, two Hessian diagonals). The kernels
//! here propagate the full payload forward and propagate adjoints of every
//! payload component backward, which is reverse-over-forward at layer
//! granularity.

use crate::diffcore::{swish_derivs, Hyper, HyperScalar, Seeds};

/// Number of payload components: value, grad[3], hess[2].
pub const NCOMP: usize = 6;
const HESS_GRAD: [usize; 2] = [2, 3];

#[inline]
pub fn comp_active(seeds: Seeds, c: usize) -> bool {
    match c {
        0 => true,
        1..=3 => seeds.has_grad(c - 1),
        _ => seeds.has_hess(c - 4),
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `c = beta * c + a * b` with optional transposes, all row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // a is m x k (or k x m stored when transposed), b is k x n (or n x k)
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HBatch {
    pub rows: usize,
    pub cols: usize,
    pub seeds: Seeds,
    comps: [Vec<f64>; NCOMP],
}

impl HBatch {
    pub fn zeros(rows: usize, cols: usize, seeds: Seeds) -> Self {
        let comps = std::array::from_fn(|c| {
            if comp_active(seeds, c) {
                vec![0.0; rows * cols]
            } else {
                Vec::new()
            }
        });
        HBatch { rows, cols, seeds, comps }
    }

    /// Value-only batch from a plain matrix.
    pub fn from_values(m: Mat) -> Self {
        let mut b = HBatch::zeros(0, m.cols, Seeds::empty());
        b.rows = m.rows;
        b.comps[0] = m.data;
        b
    }

    #[inline]
    pub fn active(&self, c: usize) -> bool {
        comp_active(self.seeds, c)
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn values(&self) -> &[f64] {
        &self.comps[0]
    }

    pub fn get(&self, r: usize, col: usize) -> HyperScalar {
        let i = r * self.cols + col;
        let mut h = Hyper::constant(self.comps[0][i]);
        h.seeds = self.seeds;
        for g in 0..3 {
            if self.active(1 + g) {
                h.grad[g] = self.comps[1 + g][i];
            }
        }
        for j in 0..2 {
            if self.active(4 + j) {
                h.hess[j] = self.comps[4 + j][i];
            }
        }
        h
    }

    pub fn set(&mut self, r: usize, col: usize, h: &HyperScalar) {
        let i = r * self.cols + col;
        self.comps[0][i] = h.val;
        for g in 0..3 {
            if self.active(1 + g) {
                self.comps[1 + g][i] = h.grad[g];
            }
        }
        for j in 0..2 {
            if self.active(4 + j) {
                self.comps[4 + j][i] = h.hess[j];
            }
        }
    }

    fn active_comps(&self) -> impl Iterator<Item = usize> + '_ {
        (0..NCOMP).filter(move |&c| self.active(c))
    }

    pub fn add_assign(&mut self, other: &HBatch) {
        debug_assert_eq!((self.rows, self.cols, self.seeds), (other.rows, other.cols, other.seeds));
        for c in 0..NCOMP {
            if self.active(c) {
                for (a, b) in self.comps[c].iter_mut().zip(&other.comps[c]) {
                    *a += b;
                }
            }
        }
    }
}

/// `y = x w + b`; the bias only shifts the value component.
pub fn affine_forward(x: &HBatch, w: &Mat, b: &[f64]) -> HBatch {
    assert_eq!(x.cols, w.rows, "affine input width");
    let mut y = HBatch::zeros(x.rows, w.cols, x.seeds);
    for c in x.active_comps().collect::<Vec<_>>() {
        if c == 0 {
            for row in y.comps[0].chunks_mut(w.cols) {
                row.copy_from_slice(b);
            }
            gemm(x.rows, x.cols, w.cols, &x.comps[0], false, &w.data, false, &mut y.comps[0], 1.0);
        } else {
            gemm(x.rows, x.cols, w.cols, &x.comps[c], false, &w.data, false, &mut y.comps[c], 0.0);
        }
    }
    y
}

/// Accumulates weight and bias adjoints; returns the input adjoint when
/// `need_input` is set.
pub fn affine_backward(
    x: &HBatch,
    w: &Mat,
    y_adj: &HBatch,
    w_adj: &mut Mat,
    b_adj: &mut [f64],
    need_input: bool,
) -> Option<HBatch> {
    for c in x.active_comps().collect::<Vec<_>>() {
        gemm(w.rows, x.rows, w.cols, &x.comps[c], true, &y_adj.comps[c], false, &mut w_adj.data, 1.0);
    }
    for row in y_adj.comps[0].chunks(w.cols) {
        for (bj, g) in b_adj.iter_mut().zip(row) {
            *bj += g;
        }
    }
    if !need_input {
        return None;
    }
    let mut x_adj = HBatch::zeros(x.rows, x.cols, x.seeds);
    for c in x.active_comps().collect::<Vec<_>>() {
        gemm(x.rows, w.cols, w.rows, &y_adj.comps[c], false, &w.data, true, &mut x_adj.comps[c], 0.0);
    }
    Some(x_adj)
}

/// Elementwise swish over the whole payload.
pub fn swish_forward(a: &HBatch) -> HBatch {
    let mut y = HBatch::zeros(a.rows, a.cols, a.seeds);
    let n = a.rows * a.cols;
    let grads: Vec<usize> = (1..4).filter(|&c| a.active(c)).collect();
    let hess: Vec<usize> = (4..6).filter(|&c| a.active(c)).collect();
    for i in 0..n {
        let [s0, s1, s2, _] = swish_derivs(a.comps[0][i]);
        y.comps[0][i] = s0;
        for &c in &grads {
            y.comps[c][i] = s1 * a.comps[c][i];
        }
        for &c in &hess {
            let d = a.comps[HESS_GRAD[c - 4]][i];
            y.comps[c][i] = s1 * a.comps[c][i] + s2 * d * d;
        }
    }
    y
}

pub fn swish_backward(a: &HBatch, y_adj: &HBatch) -> HBatch {
    let mut a_adj = HBatch::zeros(a.rows, a.cols, a.seeds);
    let n = a.rows * a.cols;
    let grads: Vec<usize> = (1..4).filter(|&c| a.active(c)).collect();
    let hess: Vec<usize> = (4..6).filter(|&c| a.active(c)).collect();
    for i in 0..n {
        let [_, s1, s2, s3] = swish_derivs(a.comps[0][i]);
        let mut gv = s1 * y_adj.comps[0][i];
        for &c in &grads {
            gv += s2 * a.comps[c][i] * y_adj.comps[c][i];
            a_adj.comps[c][i] = s1 * y_adj.comps[c][i];
        }
        for &c in &hess {
            let g = HESS_GRAD[c - 4];
            let d = a.comps[g][i];
            let yh = y_adj.comps[c][i];
            gv += (s2 * a.comps[c][i] + s3 * d * d) * yh;
            a_adj.comps[g][i] += 2.0 * s2 * d * yh;
            a_adj.comps[c][i] = s1 * yh;
        }
        a_adj.comps[0][i] = gv;
    }
    a_adj
}

/// Hyper-dual elementwise product `z * d`.
pub fn product_forward(z: &HBatch, d: &HBatch) -> HBatch {
    debug_assert_eq!(z.seeds, d.seeds);
    let mut p = HBatch::zeros(z.rows, z.cols, z.seeds);
    let n = z.rows * z.cols;
    for i in 0..n {
        let (zv, dv) = (z.comps[0][i], d.comps[0][i]);
        p.comps[0][i] = zv * dv;
        for c in 1..4 {
            if z.active(c) {
                p.comps[c][i] = z.comps[c][i] * dv + zv * d.comps[c][i];
            }
        }
        for c in 4..6 {
            if z.active(c) {
                let g = HESS_GRAD[c - 4];
                p.comps[c][i] =
                    z.comps[c][i] * dv + 2.0 * z.comps[g][i] * d.comps[g][i] + zv * d.comps[c][i];
            }
        }
    }
    p
}

/// Adjoint of one factor of a hyper-dual product given the other factor.
pub fn product_backward_factor(other: &HBatch, p_adj: &HBatch) -> HBatch {
    let mut out = HBatch::zeros(other.rows, other.cols, other.seeds);
    let n = other.rows * other.cols;
    for i in 0..n {
        let ov = other.comps[0][i];
        let mut gv = p_adj.comps[0][i] * ov;
        for c in 1..4 {
            if other.active(c) {
                gv += p_adj.comps[c][i] * other.comps[c][i];
                out.comps[c][i] = p_adj.comps[c][i] * ov;
            }
        }
        for c in 4..6 {
            if other.active(c) {
                let g = HESS_GRAD[c - 4];
                gv += p_adj.comps[c][i] * other.comps[c][i];
                out.comps[g][i] += 2.0 * p_adj.comps[c][i] * other.comps[g][i];
                out.comps[c][i] = p_adj.comps[c][i] * ov;
            }
        }
        out.comps[0][i] = gv;
    }
    out
}

/// `a - b` over the payload.
pub fn sub(a: &HBatch, b: &HBatch) -> HBatch {
    let mut out = a.clone();
    for c in 0..NCOMP {
        if out.active(c) {
            for (o, bb) in out.comps[c].iter_mut().zip(&b.comps[c]) {
                *o -= bb;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Dir, Pair, Real};

    fn full() -> Seeds {
        Seeds::T | Seeds::X | Seeds::V | Seeds::XX | Seeds::VV
    }

    fn sample_batch(rows: usize, cols: usize, shift: f64) -> HBatch {
        let mut b = HBatch::zeros(rows, cols, full());
        for r in 0..rows {
            for c in 0..cols {
                let base = (r * cols + c) as f64 * 0.37 + shift;
                let mut h = Hyper::constant(base.sin());
                h.seeds = full();
                h.grad = [base.cos(), (2.0 * base).sin(), 0.3 * base.cos()];
                h.hess = [0.2 * base.sin(), -(0.5 * base).cos()];
                b.set(r, c, &h);
            }
        }
        b
    }

    #[test]
    fn gemm_transposes() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, &mut c, 0.0);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // a^T a: 3x3
        let mut d = [0.0; 9];
        gemm(3, 2, 3, &a, true, &a, false, &mut d, 0.0);
        assert_eq!(d[0], 17.0);
        assert_eq!(d[4], 29.0);
        // a a^T: 2x2
        let mut e = [0.0; 4];
        gemm(2, 3, 2, &a, false, &a, true, &mut e, 0.0);
        assert_eq!(e, [14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn swish_forward_matches_scalar_rule() {
        let a = sample_batch(3, 4, 0.1);
        let y = swish_forward(&a);
        for r in 0..3 {
            for c in 0..4 {
                let expect = a.get(r, c).swish();
                let got = y.get(r, c);
                assert!((expect.val - got.val).abs() < 1e-14);
                for g in 0..3 {
                    assert!((expect.grad[g] - got.grad[g]).abs() < 1e-14);
                }
                for j in 0..2 {
                    assert!((expect.hess[j] - got.hess[j]).abs() < 1e-14);
                }
            }
        }
    }

    /// Directional check: <y_adj, J da> == <J^T y_adj, da>.
    fn dot(a: &HBatch, b: &HBatch) -> f64 {
        (0..NCOMP)
            .filter(|&c| a.active(c))
            .map(|c| a.comps[c].iter().zip(&b.comps[c]).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    fn axpy(a: &HBatch, s: f64, d: &HBatch) -> HBatch {
        let mut out = a.clone();
        for c in 0..NCOMP {
            if out.active(c) {
                for (o, dd) in out.comps[c].iter_mut().zip(&d.comps[c]) {
                    *o += s * dd;
                }
            }
        }
        out
    }

    #[test]
    fn swish_backward_is_the_adjoint() {
        let a = sample_batch(2, 3, 0.4);
        let da = sample_batch(2, 3, 1.9);
        let w = sample_batch(2, 3, -0.8);
        let h = 1e-5;
        let yp = swish_forward(&axpy(&a, h, &da));
        let ym = swish_forward(&axpy(&a, -h, &da));
        let lhs = (dot(&w, &yp) - dot(&w, &ym)) / (2.0 * h);
        let rhs = dot(&swish_backward(&a, &w), &da);
        assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0), "{lhs} {rhs}");
    }

    #[test]
    fn product_backward_is_the_adjoint() {
        let z = sample_batch(2, 3, 0.2);
        let d = sample_batch(2, 3, 0.9);
        let dz = sample_batch(2, 3, 2.3);
        let w = sample_batch(2, 3, -1.1);
        let h = 1e-5;
        let pp = product_forward(&axpy(&z, h, &dz), &d);
        let pm = product_forward(&axpy(&z, -h, &dz), &d);
        let lhs = (dot(&w, &pp) - dot(&w, &pm)) / (2.0 * h);
        let rhs = dot(&product_backward_factor(&d, &w), &dz);
        assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0), "{lhs} {rhs}");
        let p = product_forward(&z, &d);
        let ph = z.get(1, 2) * d.get(1, 2);
        assert!((p.get(1, 2).dd(Pair::VV) - ph.dd(Pair::VV)).abs() < 1e-14);
        assert!((p.get(1, 2).d(Dir::T) - ph.d(Dir::T)).abs() < 1e-14);
    }
}
