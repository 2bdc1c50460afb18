use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by plain `f64`, taped [`Var`](super::Var) and
/// [`Hyper`](super::Hyper) values.
///
/// Everything in the kinetic operators and the residual assembly is written
/// against this trait, so the same code serves pure evaluation, forward-mode
/// coordinate derivatives and reverse-over-forward parameter gradients.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(c: f64) -> Self;
    fn value(&self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;

    fn swish(self) -> Self {
        self * self.sigmoid()
    }

    fn square(self) -> Self {
        self * self
    }

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
}

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))`, stable for both signs.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Swish `x * sigmoid(x)` and its first three derivatives.
#[inline]
pub fn swish_derivs(x: f64) -> [f64; 4] {
    let s = sigmoid(x);
    let ds = s * (1.0 - s);
    let c = 1.0 - 2.0 * s;
    [
        x * s,
        s * (1.0 + x * (1.0 - s)),
        ds * (2.0 + x * c),
        ds * (c * (3.0 + x * c) - 2.0 * x * ds),
    ]
}

impl Real for f64 {
    #[inline]
    fn from_f64(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus(self)
    }
    #[inline]
    fn swish(self) -> Self {
        self * sigmoid(self)
    }
}
