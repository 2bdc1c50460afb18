//! The three networks of the AP formulation: `F` (distribution), `P`
//! (density) and `Φ` (potential).

use serde::{Deserialize, Serialize};

use super::batch::{HBatch, Mat};
use super::embed::fourier_embed;
use super::mionet::{mionet_eval, MionetParams};
use super::NetworkError;
use crate::diffcore::{Dir, Hyper, HyperScalar, Real, Seeds};
use crate::training::InputCouple;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    F,
    P,
    Phi,
}

impl NetKind {
    pub const ALL: [NetKind; 3] = [NetKind::F, NetKind::P, NetKind::Phi];

    /// Softplus head on `F` and `P`.
    pub fn positive(self) -> bool {
        !matches!(self, NetKind::Phi)
    }

    pub fn uses_v(self) -> bool {
        matches!(self, NetKind::F)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripleConfig {
    pub width: usize,
    /// Number of hidden layers `K`.
    pub depth: usize,
    pub latent: usize,
    pub sensors_x: usize,
    pub sensors_v: usize,
    pub modes: usize,
}

impl Default for TripleConfig {
    fn default() -> Self {
        TripleConfig { width: 64, depth: 5, latent: 64, sensors_x: 32, sensors_v: 32, modes: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTriple {
    pub f_net: MionetParams,
    pub p_net: MionetParams,
    pub phi_net: MionetParams,
    pub period: f64,
    pub modes: usize,
}

impl TripleConfig {
    pub fn trunk_dim(&self, kind: NetKind) -> usize {
        1 + 2 * self.modes + usize::from(kind.uses_v())
    }

    fn sizes(&self, input: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(self.width, self.depth));
        s.push(self.latent);
        s
    }

    pub fn layer_sizes(&self, kind: NetKind) -> [Vec<usize>; 3] {
        [
            self.sizes(self.sensors_x * self.sensors_v),
            self.sizes(self.sensors_x),
            self.sizes(self.trunk_dim(kind)),
        ]
    }
}

impl OperatorTriple {
    pub fn init(seed: u64, cfg: &TripleConfig, period: f64) -> Result<Self, NetworkError> {
        if !(period > 0.0) {
            return Err(NetworkError::Sizes(format!("period must be positive, got {period}")));
        }
        if cfg.modes == 0 {
            return Err(NetworkError::Sizes("at least one Fourier mode is required".into()));
        }
        let net = |k: NetKind, i: u64| {
            let [b1, b2, t] = cfg.layer_sizes(k);
            MionetParams::init(seed.wrapping_mul(7).wrapping_add(i), &b1, &b2, &t)
        };
        Ok(OperatorTriple {
            f_net: net(NetKind::F, 0)?,
            p_net: net(NetKind::P, 1)?,
            phi_net: net(NetKind::Phi, 2)?,
            period,
            modes: cfg.modes,
        })
    }

    pub fn net(&self, kind: NetKind) -> &MionetParams {
        match kind {
            NetKind::F => &self.f_net,
            NetKind::P => &self.p_net,
            NetKind::Phi => &self.phi_net,
        }
    }

    pub fn net_mut(&mut self, kind: NetKind) -> &mut MionetParams {
        match kind {
            NetKind::F => &mut self.f_net,
            NetKind::P => &mut self.p_net,
            NetKind::Phi => &mut self.phi_net,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|s| s.fill(0.0));
        z
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(|s| n += s.len());
        n
    }

    /// Parameters in the order `F`, `P`, `Φ`.
    pub fn visit(&self, mut f: impl FnMut(&[f64])) {
        for k in NetKind::ALL {
            self.net(k).visit(&mut f);
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for k in NetKind::ALL {
            self.net_mut(k).visit_mut(&mut f);
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(|s| out.extend_from_slice(s));
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NetworkError> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(NetworkError::Shape { what: "flat parameter vector", expected: n, got: flat.len() });
        }
        let mut off = 0;
        self.visit_mut(|s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        Ok(())
    }

    /// Trunk input `(t, cos ωx, sin ωx, [v])`.
    pub fn embed<R: Real>(&self, kind: NetKind, t: R, x: R, v: R) -> Vec<R> {
        let mut y = vec![t];
        y.extend(fourier_embed(x, self.period, self.modes));
        if kind.uses_v() {
            y.push(v);
        }
        y
    }

    /// Embedded trunk inputs for a list of `(t, x, v)` points with each
    /// coordinate seeded according to `seeds`.
    pub fn trunk_batch(&self, kind: NetKind, seeds: Seeds, points: &[[f64; 3]]) -> HBatch {
        let cols = 1 + 2 * self.modes + usize::from(kind.uses_v());
        let mut b = HBatch::zeros(points.len(), cols, seeds);
        for (r, p) in points.iter().enumerate() {
            let t = Hyper::coordinate(p[0], Dir::T, seeds);
            let x = Hyper::coordinate(p[1], Dir::X, seeds);
            let v = Hyper::coordinate(p[2], Dir::V, seeds);
            for (c, h) in self.embed(kind, t, x, v).iter().enumerate() {
                b.set(r, c, h);
            }
        }
        b
    }
}

/// Values at a batch of points of one couple.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointValues {
    pub f: Vec<f64>,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    /// `E = -∂xφ`.
    pub e: Vec<f64>,
}

impl OperatorTriple {
    /// Evaluate all three networks at `(t, x, v)` points for couple `u`,
    /// with one branch pass per network.
    pub fn eval_points(&self, u: &InputCouple, points: &[[f64; 3]]) -> Result<PointValues, NetworkError> {
        let rows = points.len();
        let sample = vec![0; rows];
        let mut out = PointValues::default();
        for k in NetKind::ALL {
            let net = self.net(k);
            let branches = net.branch_forward(
                &Mat { rows: 1, cols: u.f0_sensors.len(), data: u.f0_sensors.clone() },
                &Mat { rows: 1, cols: u.h_sensors.len(), data: u.h_sensors.clone() },
            )?;
            let seeds = if k == NetKind::Phi { Seeds::X } else { Seeds::empty() };
            let (y, _) = net.trunk_forward(&branches, &self.trunk_batch(k, seeds, points), &sample)?;
            let vals = y.comp(0);
            match k {
                NetKind::F => out.f = vals.iter().map(|&r| r.softplus()).collect(),
                NetKind::P => out.rho = vals.iter().map(|&r| r.softplus()).collect(),
                NetKind::Phi => {
                    out.phi = vals.to_vec();
                    out.e = y.comp(Dir::X as usize + 1).iter().map(|d| -d).collect();
                }
            }
        }
        Ok(out)
    }
}

/// Evaluate `(f, ρ, φ)` at one phase-space point. `ρ` and `φ` ignore `v`.
pub fn operator_eval(
    triple: &OperatorTriple,
    u: &InputCouple,
    t: HyperScalar,
    x: HyperScalar,
    v: HyperScalar,
) -> Result<(HyperScalar, HyperScalar, HyperScalar), NetworkError> {
    let mut out = [Hyper::constant(0.0); 3];
    for (i, k) in NetKind::ALL.into_iter().enumerate() {
        let y = triple.embed(k, t, x, v);
        let raw = mionet_eval(triple.net(k), &u.f0_sensors, &u.h_sensors, &y)?;
        out[i] = if k.positive() { raw.softplus() } else { raw };
    }
    Ok((out[0], out[1], out[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{seed_coordinates, Pair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn small() -> TripleConfig {
        TripleConfig { width: 8, depth: 3, latent: 6, sensors_x: 4, sensors_v: 3, modes: 1 }
    }

    fn couple(rng: &mut ChaCha8Rng) -> InputCouple {
        InputCouple {
            f0_sensors: (0..12).map(|_| rng.random_range(0.0..0.5)).collect(),
            h_sensors: (0..4).map(|_| rng.random_range(0.9..1.1)).collect(),
            h: 1.0,
            alpha: 0.05,
        }
    }

    #[test]
    fn zero_networks_give_softplus_of_zero() {
        let mut tri = OperatorTriple::init(1, &small(), 4.0 * PI).unwrap();
        tri.visit_mut(|s| s.fill(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = couple(&mut rng);
        let c = Hyper::constant;
        let (f, rho, phi) = operator_eval(&tri, &u, c(0.3), c(1.0), c(-2.0)).unwrap();
        assert_eq!(f.val, std::f64::consts::LN_2);
        assert_eq!(rho.val, std::f64::consts::LN_2);
        assert_eq!(phi.val, 0.0);
    }

    #[test]
    fn distribution_head_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for draw in 0..1000u64 {
            let tri = OperatorTriple::init(draw, &small(), 4.0 * PI).unwrap();
            let u = couple(&mut rng);
            let c = Hyper::constant;
            let (t, x, v) =
                (rng.random_range(0.0..5.0), rng.random_range(0.0..4.0 * PI), rng.random_range(-6.0..6.0));
            let (f, rho, _) = operator_eval(&tri, &u, c(t), c(x), c(v)).unwrap();
            assert!(f.val > 0.0 && rho.val > 0.0);
        }
    }

    #[test]
    fn periodic_in_x_with_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = 4.0 * PI;
        let dirs = [Dir::T, Dir::X, Dir::V];
        let pairs = [Pair::XX, Pair::VV];
        for seed in 0..5 {
            let tri = OperatorTriple::init(seed, &small(), p).unwrap();
            let u = couple(&mut rng);
            let (t0, x0, v0) = (rng.random_range(0.0..1.0), rng.random_range(0.0..p), rng.random_range(-6.0..6.0));
            let (a, b, c) = seed_coordinates(t0, x0, v0, &dirs, &pairs).unwrap();
            let lhs = operator_eval(&tri, &u, a, b, c).unwrap();
            let (a, b, c) = seed_coordinates(t0, x0 + p, v0, &dirs, &pairs).unwrap();
            let rhs = operator_eval(&tri, &u, a, b, c).unwrap();
            for (l, r) in [(lhs.0, rhs.0), (lhs.1, rhs.1), (lhs.2, rhs.2)] {
                assert!((l.val - r.val).abs() < 1e-12);
                for i in 0..3 {
                    assert!((l.grad[i] - r.grad[i]).abs() < 1e-12);
                }
                for j in 0..2 {
                    assert!((l.hess[j] - r.hess[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn density_and_potential_ignore_velocity() {
        let tri = OperatorTriple::init(3, &small(), 4.0 * PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = couple(&mut rng);
        let c = Hyper::constant;
        let a = operator_eval(&tri, &u, c(0.2), c(1.0), c(-3.0)).unwrap();
        let b = operator_eval(&tri, &u, c(0.2), c(1.0), c(4.0)).unwrap();
        assert_eq!(a.1.val, b.1.val);
        assert_eq!(a.2.val, b.2.val);
        assert_ne!(a.0.val, b.0.val);
    }

    #[test]
    fn velocity_derivatives_match_finite_differences() {
        let tri = OperatorTriple::init(11, &small(), 4.0 * PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = couple(&mut rng);
        let c = Hyper::constant;
        let f = |v: f64| operator_eval(&tri, &u, c(0.4), c(2.0), c(v)).unwrap().0.val;
        let v0 = 0.7;
        let (a, b, w) = seed_coordinates(0.4, 2.0, v0, &[Dir::V], &[Pair::VV]).unwrap();
        let out = operator_eval(&tri, &u, a, b, w).unwrap().0;
        let h = 1e-4;
        let fv = (f(v0 + h) - f(v0 - h)) / (2.0 * h);
        let fvv = (f(v0 + h) - 2.0 * f(v0) + f(v0 - h)) / (h * h);
        assert!((out.d(Dir::V) - fv).abs() <= 1e-5 * fv.abs().max(1e-3));
        assert!((out.dd(Pair::VV) - fvv).abs() <= 1e-5 * fvv.abs().max(1e-2));
    }

    #[test]
    fn flat_params_round_trip() {
        let tri = OperatorTriple::init(3, &small(), 2.0).unwrap();
        let flat = tri.flat_params();
        assert_eq!(flat.len(), tri.num_params());
        let mut other = tri.zeros_like();
        other.set_flat_params(&flat).unwrap();
        assert_eq!(other, tri);
        assert!(other.set_flat_params(&flat[1..]).is_err());
    }

    #[test]
    fn batched_points_match_single_evaluation() {
        let tri = OperatorTriple::init(5, &small(), 4.0 * PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = couple(&mut rng);
        let pts: Vec<[f64; 3]> = (0..7).map(|i| [0.1 * i as f64, 1.7 * i as f64, 0.5 - 0.3 * i as f64]).collect();
        let got = tri.eval_points(&u, &pts).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let (t, x, v) = seed_coordinates(p[0], p[1], p[2], &[Dir::X], &[]).unwrap();
            let (f, rho, phi) = operator_eval(&tri, &u, t, x, v).unwrap();
            assert!((got.f[i] - f.val).abs() < 1e-13);
            assert!((got.rho[i] - rho.val).abs() < 1e-13);
            assert!((got.phi[i] - phi.val).abs() < 1e-13);
            assert!((got.e[i] + phi.d(Dir::X)).abs() < 1e-13);
        }
    }
}
