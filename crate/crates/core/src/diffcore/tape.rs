//! Reverse-mode tape over plain reals.
//!
//! A [`Tape`] is an append-only Wengert list: every recorded node keeps up to
//! two parent indices with the local partial derivatives. Leaves registered
//! through [`Tape::leaf`] are the parameter slots; [`reverse_sweep`] returns
//! the adjoint of each leaf in registration order.
//!
//! Composing [`Hyper<Var>`](super::Hyper) values gives reverse-over-forward:
//! coordinate derivatives are carried forward inside the hyper-dual payload
//! and every payload component is itself a taped scalar.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{sigmoid, softplus, Real};
use super::DiffError;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    a: u32,
    b: u32,
    da: f64,
    db: f64,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    leaves: RefCell<Vec<u32>>,
    consumed: Cell<bool>,
    fault: Cell<Option<(usize, &'static str)>>,
}

/// A scalar that is either a recorded tape node or an untracked constant.
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape { nodes: RefCell::new(Vec::with_capacity(n)), ..Tape::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.borrow().len()
    }

    /// Register a differentiable leaf (a parameter slot).
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let idx = self.push(NONE, 0.0, NONE, 0.0);
        self.leaves.borrow_mut().push(idx);
        Var { tape: Some(self), idx, val: value }
    }

    /// First domain fault recorded on this tape, if any.
    pub fn fault(&self) -> Option<(usize, &'static str)> {
        self.fault.get()
    }

    #[inline]
    fn push(&self, a: u32, da: f64, b: u32, db: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { a, b, da, db });
        idx
    }

    fn flag(&self, node: u32, op: &'static str) {
        if self.fault.get().is_none() {
            self.fault.set(Some((node as usize, op)));
        }
    }

    fn unary<'t>(&'t self, x: Var<'t>, val: f64, d: f64) -> Var<'t> {
        let idx = self.push(x.idx, d, NONE, 0.0);
        Var { tape: Some(self), idx, val }
    }
}

/// Propagate adjoints from `output` back to every leaf of `tape`.
///
/// A tape can be swept once; the returned vector is indexed by leaf
/// registration order.
pub fn reverse_sweep(tape: &Tape, output: Var<'_>) -> Result<Vec<f64>, DiffError> {
    if tape.consumed.get() {
        return Err(DiffError::TapeConsumed);
    }
    let nodes = tape.nodes.borrow();
    if nodes.is_empty() {
        return Err(DiffError::EmptyTape);
    }
    if let Some((node, op)) = tape.fault.get() {
        return Err(DiffError::Domain { op, node: Some(node) });
    }
    tape.consumed.set(true);
    let mut adj = vec![0.0; nodes.len()];
    match output.tape {
        Some(t) if std::ptr::eq(t, tape) => adj[output.idx as usize] = 1.0,
        Some(_) => return Err(DiffError::ForeignVar),
        None => {}
    }
    for i in (0..nodes.len()).rev() {
        let a = adj[i];
        if a == 0.0 {
            continue;
        }
        let n = nodes[i];
        if n.a != NONE {
            adj[n.a as usize] += a * n.da;
        }
        if n.b != NONE {
            adj[n.b as usize] += a * n.db;
        }
    }
    Ok(tape.leaves.borrow().iter().map(|&l| adj[l as usize]).collect())
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var { tape: None, idx: NONE, val }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    pub fn val(&self) -> f64 {
        self.val
    }

    #[inline]
    fn is_zero_const(&self) -> bool {
        self.tape.is_none() && self.val == 0.0
    }

    #[inline]
    fn binary(self, rhs: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => t.unary(self, val, da),
            (None, Some(t)) => t.unary(rhs, val, db),
            (Some(t), Some(_)) => {
                let idx = t.push(self.idx, da, rhs.idx, db);
                Var { tape: Some(t), idx, val }
            }
        }
    }

    #[inline]
    fn map(self, val: f64, d: f64) -> Var<'t> {
        match self.tape {
            None => Var::constant(val),
            Some(t) => t.unary(self, val, d),
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        if rhs.is_zero_const() {
            return self;
        }
        if self.is_zero_const() {
            return rhs;
        }
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        if rhs.is_zero_const() {
            return self;
        }
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        if self.is_zero_const() || rhs.is_zero_const() {
            return Var::constant(0.0);
        }
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let out = self.binary(rhs, self.val / rhs.val, 1.0 / rhs.val, -self.val / (rhs.val * rhs.val));
        if rhs.val == 0.0 {
            if let Some(t) = out.tape {
                t.flag(out.idx, "div");
            }
        }
        out
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn neg(self) -> Var<'t> {
        self.map(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: f64) -> Var<'t> {
        if rhs == 0.0 {
            return self;
        }
        self.map(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: f64) -> Var<'t> {
        self + (-rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: f64) -> Var<'t> {
        if rhs == 0.0 {
            return Var::constant(0.0);
        }
        if rhs == 1.0 {
            return self;
        }
        self.map(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: f64) -> Var<'t> {
        self * (1.0 / rhs)
    }
}

impl<'t> Real for Var<'t> {
    fn from_f64(c: f64) -> Self {
        Var::constant(c)
    }

    fn value(&self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.map(e, e)
    }

    fn ln(self) -> Self {
        let out = self.map(self.val.ln(), 1.0 / self.val);
        if self.val <= 0.0 {
            if let Some(t) = out.tape {
                t.flag(out.idx, "ln");
            }
        }
        out
    }

    fn sin(self) -> Self {
        self.map(self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.map(self.val.cos(), -self.val.sin())
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.map(t, 1.0 - t * t)
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid(self.val);
        self.map(s, s * (1.0 - s))
    }

    fn softplus(self) -> Self {
        self.map(softplus(self.val), sigmoid(self.val))
    }

    fn swish(self) -> Self {
        let s = sigmoid(self.val);
        self.map(self.val * s, s * (1.0 + self.val * (1.0 - s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::hyper::{seed_coordinates, Dir, Hyper, Pair, Seeds};

    #[test]
    fn quadratic() {
        let tape = Tape::new();
        let w = tape.leaf(3.0);
        let loss = w * w;
        let g = reverse_sweep(&tape, loss).unwrap();
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn softplus_of_product_matches_finite_differences() {
        let x = 2.0;
        let tape = Tape::new();
        let w = tape.leaf(1.0);
        let loss = (w * x).softplus();
        let g = reverse_sweep(&tape, loss).unwrap()[0];
        let h = 1e-4;
        let fd = (softplus((1.0 + h) * x) - softplus((1.0 - h) * x)) / (2.0 * h);
        assert!((g - fd).abs() / fd.abs() < 1e-5);
        assert!((g - x * sigmoid(2.0)).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let data = [(0.5, 1.0), (-1.0, 2.0), (2.0, -0.5)];
        let model = |tape: &Tape, which: Option<usize>| {
            let a = tape.leaf(0.7);
            let b = tape.leaf(-0.2);
            let mut total = Var::constant(0.0);
            for (i, &(x, y)) in data.iter().enumerate() {
                if which.is_none_or(|w| w == i) {
                    let r = a * x + b - y;
                    total = total + r * r;
                }
            }
            reverse_sweep(tape, total).unwrap()
        };
        let all = model(&Tape::new(), None);
        let mut summed = [0.0; 2];
        for i in 0..data.len() {
            let gi = model(&Tape::new(), Some(i));
            summed[0] += gi[0];
            summed[1] += gi[1];
        }
        assert!((all[0] - summed[0]).abs() < 1e-14);
        assert!((all[1] - summed[1]).abs() < 1e-14);
    }

    #[test]
    fn consumed_and_empty_tapes_are_rejected() {
        let tape = Tape::new();
        assert!(matches!(reverse_sweep(&tape, Var::constant(1.0)), Err(DiffError::EmptyTape)));
        let w = tape.leaf(1.0);
        let y = w * 2.0;
        reverse_sweep(&tape, y).unwrap();
        assert!(matches!(reverse_sweep(&tape, y), Err(DiffError::TapeConsumed)));
    }

    #[test]
    fn domain_fault_names_the_node() {
        let tape = Tape::new();
        let w = tape.leaf(0.0);
        let y = (w * 3.0).ln();
        match reverse_sweep(&tape, y) {
            Err(DiffError::Domain { op: "ln", node: Some(n) }) => assert_eq!(n, 2),
            other => panic!("unexpected {other:?}"),
        }
        let tape = Tape::new();
        let w = tape.leaf(1.0);
        let z = tape.leaf(0.0);
        let y = w / z;
        assert!(matches!(reverse_sweep(&tape, y), Err(DiffError::Domain { op: "div", .. })));
    }

    #[test]
    fn deterministic_gradients() {
        let run = || {
            let tape = Tape::new();
            let ws: Vec<_> = (0..5).map(|i| tape.leaf(0.1 * i as f64 - 0.2)).collect();
            let mut acc = Var::constant(0.0);
            for (i, w) in ws.iter().enumerate() {
                acc = acc + (*w * (i as f64 + 0.5)).tanh().square();
            }
            reverse_sweep(&tape, acc).unwrap()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    /// Parameter gradient of the x-derivative of `w2 * swish(w1 * x)`.
    #[test]
    fn reverse_over_forward_matches_finite_differences() {
        let x0 = 0.8;
        let dfdx = |w1: f64, w2: f64| {
            let (_, x, _) = seed_coordinates(0.0, x0, 0.0, &[Dir::X], &[Pair::XX]).unwrap();
            let y = (x * w1).swish() * w2;
            (y.d(Dir::X), y.dd(Pair::XX))
        };
        let (w1, w2) = (1.3, -0.7);
        let tape = Tape::new();
        let p1 = tape.leaf(w1);
        let p2 = tape.leaf(w2);
        let seeds = Seeds::X | Seeds::XX;
        let x = Hyper::<Var>::coordinate(Var::constant(x0), Dir::X, seeds);
        let w1h = Hyper::constant(p1);
        let w2h = Hyper::constant(p2);
        let y = (x * w1h).swish() * w2h;
        let obj = y.d(Dir::X) + y.dd(Pair::XX) * 0.5;
        let g = reverse_sweep(&tape, obj).unwrap();
        let h = 1e-4;
        let f = |a: f64, b: f64| {
            let (d, dd) = dfdx(a, b);
            d + 0.5 * dd
        };
        let fd1 = (f(w1 + h, w2) - f(w1 - h, w2)) / (2.0 * h);
        let fd2 = (f(w1, w2 + h) - f(w1, w2 - h)) / (2.0 * h);
        assert!((g[0] - fd1).abs() / fd1.abs() < 1e-4, "{} vs {}", g[0], fd1);
        assert!((g[1] - fd2).abs() / fd2.abs() < 1e-4, "{} vs {}", g[1], fd2);
    }
}
