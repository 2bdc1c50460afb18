//! Hyper-dual scalars carrying first derivatives along the phase-space
//! coordinates `(t, x, v)` and the two diagonal second derivatives `xx`, `vv`.
//!
//! No residual in the model needs a mixed second derivative, so the payload
//! is fixed at three gradient slots and two Hessian-diagonal slots. Which of
//! them are live is tracked in [`Seeds`]; untracked slots are kept at zero and
//! skipped by the arithmetic.

use std::ops::{Add, Div, Mul, Neg, Sub};

use bitflags::bitflags;

use super::real::{sigmoid, softplus, swish_derivs, Real};
use super::DiffError;

/// A first-derivative direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    T = 0,
    X = 1,
    V = 2,
}

/// A tracked second-derivative pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pair {
    XX = 0,
    VV = 1,
}

impl Pair {
    pub fn dir(self) -> Dir {
        match self {
            Pair::XX => Dir::X,
            Pair::VV => Dir::V,
        }
    }
}

bitflags! {
    /// Layout of live derivative slots.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Seeds: u8 {
        const T = 1;
        const X = 1 << 1;
        const V = 1 << 2;
        const XX = 1 << 3;
        const VV = 1 << 4;
    }
}

impl Seeds {
    pub fn dir(d: Dir) -> Seeds {
        match d {
            Dir::T => Seeds::T,
            Dir::X => Seeds::X,
            Dir::V => Seeds::V,
        }
    }

    pub fn pair(p: Pair) -> Seeds {
        match p {
            Pair::XX => Seeds::XX,
            Pair::VV => Seeds::VV,
        }
    }

    #[inline]
    pub fn has_grad(self, i: usize) -> bool {
        self.bits() & (1 << i) != 0
    }

    #[inline]
    pub fn has_hess(self, j: usize) -> bool {
        self.bits() & (1 << (3 + j)) != 0
    }

    /// Build a layout from directions and pairs, validating it.
    pub fn build(directions: &[Dir], pairs: &[Pair]) -> Result<Seeds, DiffError> {
        let mut s = Seeds::empty();
        for &d in directions {
            if s.contains(Seeds::dir(d)) {
                return Err(DiffError::DuplicateDirection(d));
            }
            s |= Seeds::dir(d);
        }
        for &p in pairs {
            if !s.contains(Seeds::dir(p.dir())) {
                return Err(DiffError::UnseededPair(p));
            }
            if s.contains(Seeds::pair(p)) {
                return Err(DiffError::DuplicatePair(p));
            }
            s |= Seeds::pair(p);
        }
        Ok(s)
    }
}

/// Index of the gradient slot feeding each Hessian slot.
const HESS_DIR: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper<S> {
    pub val: S,
    pub grad: [S; 3],
    pub hess: [S; 2],
    pub seeds: Seeds,
}

/// Hyper-dual over plain reals.
pub type HyperScalar = Hyper<f64>;

impl<S: Real> Hyper<S> {
    pub fn constant(val: S) -> Self {
        let z = S::zero();
        Hyper { val, grad: [z; 3], hess: [z; 2], seeds: Seeds::empty() }
    }

    /// A coordinate with unit derivative along `dir` inside layout `seeds`.
    pub fn coordinate(val: S, dir: Dir, seeds: Seeds) -> Self {
        let mut h = Hyper::constant(val);
        h.seeds = seeds;
        if seeds.contains(Seeds::dir(dir)) {
            h.grad[dir as usize] = S::from_f64(1.0);
        }
        h
    }

    pub fn d(&self, dir: Dir) -> S {
        self.grad[dir as usize]
    }

    pub fn dd(&self, pair: Pair) -> S {
        self.hess[pair as usize]
    }

    /// Fails when any of `required` is not tracked.
    pub fn require(&self, required: Seeds, what: &'static str) -> Result<(), DiffError> {
        if self.seeds.contains(required) {
            Ok(())
        } else {
            Err(DiffError::MissingComponent { what, missing: required - self.seeds })
        }
    }

    /// Chain rule through a scalar function with value `g`, first derivative
    /// `g1` and second derivative `g2` at `self.val`.
    #[inline]
    pub fn chain(self, g: S, g1: S, g2: S) -> Self {
        let z = S::zero();
        let s = self.seeds;
        let mut out = Hyper { val: g, grad: [z; 3], hess: [z; 2], seeds: s };
        for i in 0..3 {
            if s.has_grad(i) {
                out.grad[i] = g1 * self.grad[i];
            }
        }
        for j in 0..2 {
            if s.has_hess(j) {
                let di = self.grad[HESS_DIR[j]];
                out.hess[j] = g1 * self.hess[j] + g2 * di * di;
            }
        }
        out
    }

    pub fn recip(self) -> Self {
        let r = S::from_f64(1.0) / self.val;
        let r2 = r * r;
        self.chain(r, -r2, r2 * r * 2.0)
    }

    /// Checked primitive evaluation; see [`primitive_eval`].
    pub fn checked_div(self, rhs: Self) -> Result<Self, DiffError> {
        if rhs.val.value() == 0.0 {
            return Err(DiffError::Domain { op: "div", node: None });
        }
        Ok(self / rhs)
    }

    pub fn checked_ln(self) -> Result<Self, DiffError> {
        if self.val.value() <= 0.0 {
            return Err(DiffError::Domain { op: "ln", node: None });
        }
        Ok(Real::ln(self))
    }
}

impl<S: Real> Add for Hyper<S> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let s = self.seeds | rhs.seeds;
        let mut out = Hyper::constant(self.val + rhs.val);
        out.seeds = s;
        for i in 0..3 {
            if s.has_grad(i) {
                out.grad[i] = self.grad[i] + rhs.grad[i];
            }
        }
        for j in 0..2 {
            if s.has_hess(j) {
                out.hess[j] = self.hess[j] + rhs.hess[j];
            }
        }
        out
    }
}

impl<S: Real> Sub for Hyper<S> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<S: Real> Neg for Hyper<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<S: Real> Mul for Hyper<S> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let s = self.seeds | rhs.seeds;
        let mut out = Hyper::constant(self.val * rhs.val);
        out.seeds = s;
        for i in 0..3 {
            if s.has_grad(i) {
                out.grad[i] = self.grad[i] * rhs.val + self.val * rhs.grad[i];
            }
        }
        for j in 0..2 {
            if s.has_hess(j) {
                let i = HESS_DIR[j];
                out.hess[j] = self.hess[j] * rhs.val
                    + self.grad[i] * rhs.grad[i] * 2.0
                    + self.val * rhs.hess[j];
            }
        }
        out
    }
}

impl<S: Real> Div for Hyper<S> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<S: Real> Add<f64> for Hyper<S> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.val = self.val + rhs;
        self
    }
}

impl<S: Real> Sub<f64> for Hyper<S> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.val = self.val - rhs;
        self
    }
}

impl<S: Real> Mul<f64> for Hyper<S> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        let s = self.seeds;
        let mut out = Hyper::constant(self.val * rhs);
        out.seeds = s;
        for i in 0..3 {
            if s.has_grad(i) {
                out.grad[i] = self.grad[i] * rhs;
            }
        }
        for j in 0..2 {
            if s.has_hess(j) {
                out.hess[j] = self.hess[j] * rhs;
            }
        }
        out
    }
}

impl<S: Real> Div<f64> for Hyper<S> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<S: Real> Real for Hyper<S> {
    fn from_f64(c: f64) -> Self {
        Hyper::constant(S::from_f64(c))
    }

    fn value(&self) -> f64 {
        self.val.value()
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.chain(e, e, e)
    }

    fn ln(self) -> Self {
        let r = S::from_f64(1.0) / self.val;
        self.chain(self.val.ln(), r, -(r * r))
    }

    fn sin(self) -> Self {
        let (s, c) = (self.val.sin(), self.val.cos());
        self.chain(s, c, -s)
    }

    fn cos(self) -> Self {
        let (s, c) = (self.val.sin(), self.val.cos());
        self.chain(c, -s, -c)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        let d = (t * t - 1.0) * -1.0;
        self.chain(t, d, d * t * -2.0)
    }

    fn sigmoid(self) -> Self {
        let s = self.val.sigmoid();
        let d = s * (s * -1.0 + 1.0);
        self.chain(s, d, d * (s * -2.0 + 1.0))
    }

    fn softplus(self) -> Self {
        let s = self.val.sigmoid();
        self.chain(self.val.softplus(), s, s * (s * -1.0 + 1.0))
    }

    fn swish(self) -> Self {
        let s = self.val.sigmoid();
        let one_minus = s * -1.0 + 1.0;
        let g = self.val * s;
        let g1 = s * (self.val * one_minus + 1.0);
        let g2 = s * one_minus * (self.val * (s * -2.0 + 1.0) + 2.0);
        self.chain(g, g1, g2)
    }
}

/// Place the three phase-space coordinates into one shared layout.
///
/// Each returned scalar has unit derivative along its own direction when that
/// direction is seeded, and zero elsewhere.
pub fn seed_coordinates(
    t: f64,
    x: f64,
    v: f64,
    directions: &[Dir],
    second_pairs: &[Pair],
) -> Result<(HyperScalar, HyperScalar, HyperScalar), DiffError> {
    if directions.is_empty() {
        return Err(DiffError::NoDirections);
    }
    let seeds = Seeds::build(directions, second_pairs)?;
    Ok((
        Hyper::coordinate(t, Dir::T, seeds),
        Hyper::coordinate(x, Dir::X, seeds),
        Hyper::coordinate(v, Dir::V, seeds),
    ))
}

/// Primitive operations with checked domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Softplus,
    Swish,
}

impl PrimOp {
    pub fn arity(self) -> usize {
        match self {
            PrimOp::Add | PrimOp::Sub | PrimOp::Mul | PrimOp::Div => 2,
            _ => 1,
        }
    }
}

/// Evaluate one primitive on hyper-dual operands.
///
/// Operands must share the same seeded layout (constants with an empty layout
/// are accepted alongside anything).
pub fn primitive_eval<S: Real>(op: PrimOp, operands: &[Hyper<S>]) -> Result<Hyper<S>, DiffError> {
    if operands.len() != op.arity() {
        return Err(DiffError::Arity { op, expected: op.arity(), got: operands.len() });
    }
    if let [a, b] = operands {
        if !a.seeds.is_empty() && !b.seeds.is_empty() && a.seeds != b.seeds {
            return Err(DiffError::LayoutMismatch(a.seeds, b.seeds));
        }
    }
    let a = operands[0];
    Ok(match op {
        PrimOp::Add => a + operands[1],
        PrimOp::Sub => a - operands[1],
        PrimOp::Mul => a * operands[1],
        PrimOp::Div => a.checked_div(operands[1])?,
        PrimOp::Neg => -a,
        PrimOp::Exp => a.exp(),
        PrimOp::Ln => a.checked_ln()?,
        PrimOp::Sin => a.sin(),
        PrimOp::Cos => a.cos(),
        PrimOp::Tanh => a.tanh(),
        PrimOp::Sigmoid => a.sigmoid(),
        PrimOp::Softplus => a.softplus(),
        PrimOp::Swish => a.swish(),
    })
}

/// Plain-real reference implementation of a unary primitive, used by tests.
pub fn eval_real(op: PrimOp, x: f64) -> f64 {
    match op {
        PrimOp::Neg => -x,
        PrimOp::Exp => x.exp(),
        PrimOp::Ln => x.ln(),
        PrimOp::Sin => x.sin(),
        PrimOp::Cos => x.cos(),
        PrimOp::Tanh => x.tanh(),
        PrimOp::Sigmoid => sigmoid(x),
        PrimOp::Softplus => softplus(x),
        PrimOp::Swish => swish_derivs(x)[0],
        _ => panic!("binary op {op:?} has no unary reference"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_seeded(t: f64, x: f64, v: f64) -> (HyperScalar, HyperScalar, HyperScalar) {
        seed_coordinates(t, x, v, &[Dir::T, Dir::X, Dir::V], &[Pair::XX, Pair::VV]).unwrap()
    }

    #[test]
    fn identity_seeding() {
        let (_, x, _) = all_seeded(0.0, 1.0, 2.0);
        assert_eq!(x.val, 1.0);
        assert_eq!(x.grad, [0.0, 1.0, 0.0]);
        assert_eq!(x.hess, [0.0, 0.0]);
    }

    #[test]
    fn bilinear_product() {
        let (_, x, v) = all_seeded(0.0, 1.0, 2.0);
        let p = x * v;
        assert_eq!(p.val, 2.0);
        assert_eq!(p.d(Dir::X), 2.0);
        assert_eq!(p.d(Dir::V), 1.0);
        assert_eq!(p.dd(Pair::XX), 0.0);
    }

    #[test]
    fn sin_at_zero() {
        let (_, x, _) = seed_coordinates(0.0, 0.0, 0.0, &[Dir::X], &[Pair::XX]).unwrap();
        let s = x.sin();
        assert_eq!((s.val, s.d(Dir::X), s.dd(Pair::XX)), (0.0, 1.0, 0.0));
    }

    #[test]
    fn seeding_errors() {
        assert!(matches!(
            seed_coordinates(0.0, 0.0, 0.0, &[Dir::X, Dir::X], &[]),
            Err(DiffError::DuplicateDirection(Dir::X))
        ));
        assert!(matches!(
            seed_coordinates(0.0, 0.0, 0.0, &[Dir::X], &[Pair::VV]),
            Err(DiffError::UnseededPair(Pair::VV))
        ));
        assert!(matches!(seed_coordinates(0.0, 0.0, 0.0, &[], &[]), Err(DiffError::NoDirections)));
    }

    #[test]
    fn softplus_and_swish_at_zero() {
        let (_, x, _) = seed_coordinates(0.0, 0.0, 0.0, &[Dir::X], &[]).unwrap();
        let sp = primitive_eval(PrimOp::Softplus, &[x]).unwrap();
        assert!((sp.val - 0.6931471805599453).abs() < 1e-15);
        assert_eq!(sp.d(Dir::X), 0.5);
        let sw = primitive_eval(PrimOp::Swish, &[x]).unwrap();
        assert_eq!(sw.val, 0.0);
    }

    #[test]
    fn domain_errors() {
        let (_, x, _) = all_seeded(0.0, 0.0, 1.0);
        assert!(matches!(
            primitive_eval(PrimOp::Div, &[x, x]),
            Err(DiffError::Domain { op: "div", .. })
        ));
        assert!(matches!(primitive_eval(PrimOp::Ln, &[x]), Err(DiffError::Domain { op: "ln", .. })));
        assert!(matches!(primitive_eval(PrimOp::Ln, &[x * -1.0 - 1.0]), Err(DiffError::Domain { .. })));
    }

    #[test]
    fn layout_mismatch_rejected() {
        let (_, x, _) = seed_coordinates(0.0, 1.0, 0.0, &[Dir::X], &[]).unwrap();
        let (_, _, v) = seed_coordinates(0.0, 0.0, 1.0, &[Dir::V], &[]).unwrap();
        assert!(matches!(primitive_eval(PrimOp::Mul, &[x, v]), Err(DiffError::LayoutMismatch(..))));
        // constants mix with anything
        assert!(primitive_eval(PrimOp::Mul, &[x, Hyper::constant(2.0)]).is_ok());
    }

    #[test]
    fn zero_payload_behaves_like_real() {
        let ops = [
            PrimOp::Exp,
            PrimOp::Sin,
            PrimOp::Cos,
            PrimOp::Tanh,
            PrimOp::Sigmoid,
            PrimOp::Softplus,
            PrimOp::Swish,
            PrimOp::Neg,
        ];
        for &a in &[-1.7, 0.3, 2.2] {
            let h = Hyper::constant(a);
            for op in ops {
                let r = primitive_eval(op, &[h]).unwrap();
                assert_eq!(r.val, eval_real(op, a), "{op:?}");
                assert_eq!(r.grad, [0.0; 3]);
                assert_eq!(r.hess, [0.0; 2]);
            }
            let b = Hyper::constant(0.9);
            assert_eq!((h / b).val, a / 0.9);
            assert_eq!((h * b).val, a * 0.9);
        }
    }

    /// Nested composition exercising every unary primitive plus division.
    fn composite<S: Real>(x: S, v: S) -> S {
        let a = (x * v).sin() + v.cos() * x.tanh();
        let b = (a * 0.5).exp() / (v.softplus() + 1.0);
        b.swish() + (x.sigmoid() * v).ln() * 0.3 + x.square()
    }

    fn composite_f64(t: f64, x: f64, v: f64) -> f64 {
        composite(x + 0.1 * t, v)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
    }

    proptest! {
        #[test]
        fn derivatives_match_central_differences(t in -1.0f64..1.0, x in -1.2f64..1.2, v in 0.5f64..2.0) {
            let (th, xh, vh) = all_seeded(t, x, v);
            let out = composite(xh + th * 0.1, vh);
            let h = 1e-4;
            let f = |t: f64, x: f64, v: f64| composite_f64(t, x, v);
            let ft = (f(t + h, x, v) - f(t - h, x, v)) / (2.0 * h);
            let fx = (f(t, x + h, v) - f(t, x - h, v)) / (2.0 * h);
            let fv = (f(t, x, v + h) - f(t, x, v - h)) / (2.0 * h);
            let fxx = (f(t, x + h, v) - 2.0 * f(t, x, v) + f(t, x - h, v)) / (h * h);
            let fvv = (f(t, x, v + h) - 2.0 * f(t, x, v) + f(t, x, v - h)) / (h * h);
            prop_assert!((out.val - f(t, x, v)).abs() < 1e-14);
            prop_assert!(rel_close(out.d(Dir::T), ft, 1e-5));
            prop_assert!(rel_close(out.d(Dir::X), fx, 1e-5));
            prop_assert!(rel_close(out.d(Dir::V), fv, 1e-5));
            // second differences lose ~8 digits at h = 1e-4
            prop_assert!(rel_close(out.dd(Pair::XX), fxx, 1e-5) || (out.dd(Pair::XX) - fxx).abs() < 2e-7);
            prop_assert!(rel_close(out.dd(Pair::VV), fvv, 1e-5) || (out.dd(Pair::VV) - fvv).abs() < 2e-7);
        }
    }
}
