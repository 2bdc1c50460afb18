//! Collision operators: linear Fokker-Planck, time relaxation, and the
//! non-degenerate and degenerate semiconductor Boltzmann operators.

use serde::{Deserialize, Serialize};

use super::quadrature::{moment, VelocityQuadrature};
use super::{maxwellian, KineticsError};
use crate::diffcore::{Dir, Hyper, Pair, Real, Seeds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    FokkerPlanck,
    Isotropic,
    NonDegenerate,
    Degenerate,
}

/// Symmetric cross section `Ψ(v, v')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossSection {
    Unit,
    /// `1 + exp(-(v - v')²)`.
    Gaussian,
}

impl CrossSection {
    pub fn eval(self, v: f64, vp: f64) -> f64 {
        match self {
            CrossSection::Unit => 1.0,
            CrossSection::Gaussian => {
                let d = v - vp;
                1.0 + (-d * d).exp()
            }
        }
    }

    /// Bounds `(Ψ0, Ψ1)` over the real line.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            CrossSection::Unit => (1.0, 1.0),
            CrossSection::Gaussian => (1.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSpec {
    pub kind: CollisionKind,
    pub cross_section: CrossSection,
    pub quad: VelocityQuadrature,
    m_nodes: Vec<f64>,
    /// Quadrature mass of `M`.
    m_mass: f64,
}

impl CollisionSpec {
    pub fn new(kind: CollisionKind, cross_section: CrossSection, quad: VelocityQuadrature) -> Self {
        let m_nodes: Vec<f64> = quad.nodes.iter().map(|&v| maxwellian(v)).collect();
        let m_mass = m_nodes.iter().zip(&quad.weights).map(|(m, w)| m * w).sum();
        CollisionSpec { kind, cross_section, quad, m_nodes, m_mass }
    }

    /// Derivative components `f_here` must carry for this operator.
    pub fn required_seeds(&self) -> Seeds {
        match self.kind {
            CollisionKind::FokkerPlanck => Seeds::V | Seeds::VV,
            _ => Seeds::empty(),
        }
    }

    /// `Q(f)` at velocity `v`, with `f_nodes` the values of `f` at the
    /// quadrature nodes for the same `(t, x)`. The relaxation operator uses
    /// the Maxwellian normalized to unit quadrature mass, so `⟨Q(f)⟩ = 0`
    /// holds for the rule itself.
    pub fn apply<S: Real>(&self, f_here: &Hyper<S>, f_nodes: &[S], v: f64) -> Result<S, KineticsError> {
        match self.kind {
            CollisionKind::FokkerPlanck => q_fp(f_here, v),
            CollisionKind::Isotropic => {
                Ok(q_isotropic(f_here.val, moment(f_nodes, 0, &self.quad)? * (1.0 / self.m_mass), v))
            }
            CollisionKind::NonDegenerate => q_nondeg(f_nodes, f_here.val, v, self),
            CollisionKind::Degenerate => q_deg(f_nodes, f_here.val, v, self),
        }
    }

    fn check_nodes(&self, n: usize) -> Result<(), KineticsError> {
        if n != self.quad.len() {
            return Err(KineticsError::NodeCount { expected: self.quad.len(), got: n });
        }
        Ok(())
    }
}

/// Linear Fokker-Planck operator `∂v(v f + ∂v f)`, expanded pointwise.
pub fn q_fp<S: Real>(f: &Hyper<S>, v: f64) -> Result<S, KineticsError> {
    f.require(Seeds::V | Seeds::VV, "Fokker-Planck operand")?;
    Ok(f.val + f.d(Dir::V) * v + f.dd(Pair::VV))
}

/// Time relaxation `M(v) ρ - f`.
pub fn q_isotropic<R: Real>(f: R, rho: R, v: f64) -> R {
    rho * maxwellian(v) - f
}

/// `∫ Ψ(v, v') (M(v) f(v') - M(v') f(v)) dv'`.
pub fn q_nondeg<R: Real>(f_nodes: &[R], f_here: R, v: f64, spec: &CollisionSpec) -> Result<R, KineticsError> {
    spec.check_nodes(f_nodes.len())?;
    let mv = maxwellian(v);
    let mut gain = R::zero();
    let mut loss = 0.0;
    for (j, &fj) in f_nodes.iter().enumerate() {
        let wpsi = spec.quad.weights[j] * spec.cross_section.eval(v, spec.quad.nodes[j]);
        gain = gain + fj * (wpsi * mv);
        loss += wpsi * spec.m_nodes[j];
    }
    Ok(gain - f_here * loss)
}

/// `∫ Ψ(v', v) (M(v) f(v') (1 - f(v)) - M(v') f(v) (1 - f(v'))) dv'`.
pub fn q_deg<R: Real>(f_nodes: &[R], f_here: R, v: f64, spec: &CollisionSpec) -> Result<R, KineticsError> {
    spec.check_nodes(f_nodes.len())?;
    let mv = maxwellian(v);
    // Expanded: M(v)(1-f) Σ wψ f_j - f Σ wψ M_j (1 - f_j)
    let mut a = R::zero();
    let mut b = R::zero();
    for (j, &fj) in f_nodes.iter().enumerate() {
        let wpsi = spec.quad.weights[j] * spec.cross_section.eval(spec.quad.nodes[j], v);
        a = a + fj * wpsi;
        b = b + (fj * -1.0 + 1.0) * (wpsi * spec.m_nodes[j]);
    }
    Ok(a * (f_here * -mv + mv) - f_here * b)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::seed_coordinates;
    use crate::kinetics::fermi_dirac;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: CollisionKind, cs: CrossSection) -> CollisionSpec {
        CollisionSpec::new(kind, cs, VelocityQuadrature::gauss_legendre(16, -6.0, 6.0).unwrap())
    }

    fn v_coord(v: f64) -> Hyper<f64> {
        seed_coordinates(0.0, 0.0, v, &[Dir::V], &[Pair::VV]).unwrap().2
    }

    #[test]
    fn fokker_planck_examples() {
        let v = v_coord(1.0);
        assert!((q_fp(&(v * v), 1.0).unwrap() - 5.0).abs() < 1e-14);
        for v0 in [-2.0, 0.0, 3.0] {
            assert!(q_fp(&maxwellian(v_coord(v0)), v0).unwrap().abs() < 1e-10);
        }
        let mut c = Hyper::constant(2.5);
        c.seeds = Seeds::V | Seeds::VV;
        assert_eq!(q_fp(&c, 0.0).unwrap(), 2.5);
        assert!(q_fp(&Hyper::constant(1.0), 0.0).is_err());
    }

    #[test]
    fn fokker_planck_conserves_mass_for_decaying_f() {
        let q = VelocityQuadrature::gauss_legendre(64, -6.0, 6.0).unwrap();
        let total: f64 = q
            .nodes
            .iter()
            .zip(&q.weights)
            .map(|(&v, &w)| {
                let x = v_coord(v);
                let f = (x * x * -1.0).exp() * (x * 0.3 + 1.0);
                w * q_fp(&f, v).unwrap()
            })
            .sum();
        assert!(total.abs() < 1e-10, "{total}");
    }

    #[test]
    fn isotropic_examples() {
        for v in [-1.0, 0.0, 2.0] {
            let m = maxwellian(v);
            assert_eq!(q_isotropic(m, 1.0, v), 0.0);
            assert_eq!(q_isotropic(0.0, 1.0, v), m);
            assert_eq!(q_isotropic(2.0 * m, 2.0, v), 0.0);
        }
    }

    #[test]
    fn nondegenerate_null_space_and_reduction() {
        let s = spec(CollisionKind::NonDegenerate, CrossSection::Gaussian);
        let fm: Vec<f64> = s.quad.nodes.iter().map(|&v| 0.7 * maxwellian(v)).collect();
        for (i, &v) in s.quad.nodes.iter().enumerate() {
            assert!(q_nondeg(&fm, fm[i], v, &s).unwrap().abs() < 1e-12);
        }
        let u = spec(CollisionKind::NonDegenerate, CrossSection::Unit);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let rho = moment(&f, 0, &u.quad).unwrap();
        let m_mass = u.quad.integrate(maxwellian);
        for v in [-0.3, 1.7] {
            let fh = 0.4;
            let expect = maxwellian(v) * rho - fh * m_mass;
            assert!((q_nondeg(&f, fh, v, &u).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn collisions_conserve_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [CollisionKind::Isotropic, CollisionKind::NonDegenerate, CollisionKind::Degenerate] {
            let s = spec(kind, CrossSection::Gaussian);
            let f: Vec<f64> = (0..16).map(|_| rng.random_range(0.01..0.99)).collect();
            let q: Vec<f64> = (0..16)
                .map(|i| s.apply(&Hyper::constant(f[i]), &f, s.quad.nodes[i]).unwrap())
                .collect();
            let mass = moment(&q, 0, &s.quad).unwrap();
            assert!(mass.abs() < 1e-10, "{kind:?}: {mass}");
        }
    }

    #[test]
    fn nondegenerate_is_linear() {
        let s = spec(CollisionKind::NonDegenerate, CrossSection::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let g: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let (a, b) = (1.3, -0.4);
        let fg: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let v = 0.9;
        let lhs = q_nondeg(&fg, a * 0.2 + b * 0.5, v, &s).unwrap();
        let rhs = a * q_nondeg(&f, 0.2, v, &s).unwrap() + b * q_nondeg(&g, 0.5, v, &s).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn degenerate_null_space() {
        let s = spec(CollisionKind::Degenerate, CrossSection::Gaussian);
        for mu in [-1.0, 0.0, 1.5] {
            let f: Vec<f64> = s.quad.nodes.iter().map(|&v| fermi_dirac(v, mu)).collect();
            for (i, &v) in s.quad.nodes.iter().enumerate() {
                assert!(q_deg(&f, f[i], v, &s).unwrap().abs() < 1e-12);
            }
            assert!(q_deg(&f, fermi_dirac(0.37, mu), 0.37, &s).unwrap().abs() < 1e-12);
        }
        assert_eq!(q_deg(&[0.0; 16], 0.0, 0.5, &s).unwrap(), 0.0);
        assert!(q_deg(&[1.0; 16], 1.0, 0.5, &s).unwrap().abs() < 1e-15);
    }

    #[test]
    fn even_data_gives_even_collisions() {
        for kind in [CollisionKind::NonDegenerate, CollisionKind::Degenerate] {
            let s = spec(kind, CrossSection::Gaussian);
            let f: Vec<f64> = s.quad.nodes.iter().map(|&v| 0.3 / (1.0 + v * v)).collect();
            for v in [0.4, 2.2] {
                let a = s.apply(&Hyper::constant(0.3 / (1.0 + v * v)), &f, v).unwrap();
                let b = s.apply(&Hyper::constant(0.3 / (1.0 + v * v)), &f, -v).unwrap();
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cross_section_symmetric_and_bounded() {
        let s = spec(CollisionKind::Degenerate, CrossSection::Gaussian);
        let (lo, hi) = CrossSection::Gaussian.bounds();
        for &a in &s.quad.nodes {
            for &b in &s.quad.nodes {
                let p = CrossSection::Gaussian.eval(a, b);
                assert!((p - CrossSection::Gaussian.eval(b, a)).abs() < 1e-12);
                assert!(p >= lo && p <= hi);
            }
        }
    }

    #[test]
    fn node_count_checked() {
        let s = spec(CollisionKind::Degenerate, CrossSection::Unit);
        assert!(q_deg(&[0.1; 3], 0.1, 0.0, &s).is_err());
        assert!(q_nondeg(&[0.1; 3], 0.1, 0.0, &s).is_err());
    }
}
