//! Velocity-space quadrature rules.

use serde::{Deserialize, Serialize};

use super::KineticsError;
use crate::diffcore::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl VelocityQuadrature {
    /// `n`-point Gauss-Legendre rule on `[v_min, v_max]`, nodes ascending.
    pub fn gauss_legendre(n: usize, v_min: f64, v_max: f64) -> Result<Self, KineticsError> {
        check_interval(n, v_min, v_max)?;
        let mid = 0.5 * (v_max + v_min);
        let half = 0.5 * (v_max - v_min);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = mid - half * x;
            nodes[n - 1 - i] = mid + half * x;
            weights[i] = half * w;
            weights[n - 1 - i] = half * w;
        }
        Ok(VelocityQuadrature { nodes, weights, v_min, v_max })
    }

    /// Composite midpoint rule with `n` equal cells.
    pub fn midpoint(n: usize, v_min: f64, v_max: f64) -> Result<Self, KineticsError> {
        check_interval(n, v_min, v_max)?;
        let dv = (v_max - v_min) / n as f64;
        Ok(VelocityQuadrature {
            nodes: (0..n).map(|i| v_min + (i as f64 + 0.5) * dv).collect(),
            weights: vec![dv; n],
            v_min,
            v_max,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&v, &w)| w * f(v)).sum()
    }
}

fn check_interval(n: usize, v_min: f64, v_max: f64) -> Result<(), KineticsError> {
    if n == 0 {
        return Err(KineticsError::Quadrature("node count must be positive".into()));
    }
    if !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
        return Err(KineticsError::Quadrature(format!("invalid interval [{v_min}, {v_max}]")));
    }
    Ok(())
}

/// Velocity moment `sum_i w_i v_i^order f_i` for order 0 (density) or 1
/// (flux).
pub fn moment<R: Real>(f_nodes: &[R], order: u8, quad: &VelocityQuadrature) -> Result<R, KineticsError> {
    if f_nodes.len() != quad.len() {
        return Err(KineticsError::NodeCount { expected: quad.len(), got: f_nodes.len() });
    }
    let mut acc = R::zero();
    for ((&f, &w), &v) in f_nodes.iter().zip(&quad.weights).zip(&quad.nodes) {
        let c = match order {
            0 => w,
            1 => w * v,
            _ => return Err(KineticsError::MomentOrder(order)),
        };
        acc = acc + f * c;
    }
    Ok(acc)
}
