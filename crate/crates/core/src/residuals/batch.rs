//! Collocation points bound to input couples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InitialData, ResidualError};

/// `[0, T] × [x_min, x_max] × [v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDomain {
    pub t_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl PhaseDomain {
    pub fn period(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn validate(&self) -> Result<(), ResidualError> {
        let ok = self.t_max > 0.0 && self.x_max > self.x_min && self.v_max > self.v_min;
        let finite = [self.t_max, self.x_min, self.x_max, self.v_min, self.v_max].iter().all(|x| x.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(ResidualError::InvalidInput(format!("degenerate phase domain {self:?}")))
        }
    }
}

/// Domain points `(t, x, v)` and initial points `(x, v)`, each tagged with
/// the index of the couple it belongs to. `ic_f0` holds `f0(x, v)` of that
/// couple at each initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationBatch {
    pub dom: Vec<[f64; 3]>,
    pub dom_sample: Vec<usize>,
    pub ic: Vec<[f64; 2]>,
    pub ic_sample: Vec<usize>,
    pub ic_f0: Vec<f64>,
}

impl CollocationBatch {
    /// `n_dom` domain and `n_ic` initial tuples, each with a uniformly drawn
    /// couple and a uniformly drawn point.
    pub fn sample<R: Rng>(
        domain: &PhaseDomain,
        initial: &[InitialData],
        n_dom: usize,
        n_ic: usize,
        rng: &mut R,
    ) -> Result<Self, ResidualError> {
        domain.validate()?;
        if initial.is_empty() {
            return Err(ResidualError::InvalidInput("no input couples".into()));
        }
        let n = initial.len();
        let dom_sample: Vec<usize> = (0..n_dom).map(|_| rng.random_range(0..n)).collect();
        let dom = (0..n_dom).map(|_| draw_txv(domain, rng)).collect();
        let ic_sample: Vec<usize> = (0..n_ic).map(|_| rng.random_range(0..n)).collect();
        let ic: Vec<[f64; 2]> = (0..n_ic).map(|_| draw_xv(domain, rng)).collect();
        let ic_f0 = ic.iter().zip(&ic_sample).map(|(p, &s)| initial[s].f0(p[0], p[1])).collect();
        Ok(CollocationBatch { dom, dom_sample, ic, ic_sample, ic_f0 })
    }

    /// Exactly `n_dom` domain and `n_ic` initial points for every couple.
    pub fn per_couple<R: Rng>(
        domain: &PhaseDomain,
        initial: &[InitialData],
        n_dom: usize,
        n_ic: usize,
        rng: &mut R,
    ) -> Result<Self, ResidualError> {
        domain.validate()?;
        let mut b = CollocationBatch {
            dom: Vec::new(),
            dom_sample: Vec::new(),
            ic: Vec::new(),
            ic_sample: Vec::new(),
            ic_f0: Vec::new(),
        };
        for (s, init) in initial.iter().enumerate() {
            for _ in 0..n_dom {
                b.dom.push(draw_txv(domain, rng));
                b.dom_sample.push(s);
            }
            for _ in 0..n_ic {
                let p = draw_xv(domain, rng);
                b.ic_f0.push(init.f0(p[0], p[1]));
                b.ic.push(p);
                b.ic_sample.push(s);
            }
        }
        Ok(b)
    }

    /// Draw a minibatch of tuples uniformly with replacement from `self`.
    pub fn minibatch<R: Rng>(&self, n_dom: usize, n_ic: usize, rng: &mut R) -> Self {
        let mut b = CollocationBatch {
            dom: Vec::with_capacity(n_dom),
            dom_sample: Vec::with_capacity(n_dom),
            ic: Vec::with_capacity(n_ic),
            ic_sample: Vec::with_capacity(n_ic),
            ic_f0: Vec::with_capacity(n_ic),
        };
        if !self.dom.is_empty() {
            for _ in 0..n_dom {
                let i = rng.random_range(0..self.dom.len());
                b.dom.push(self.dom[i]);
                b.dom_sample.push(self.dom_sample[i]);
            }
        }
        if !self.ic.is_empty() {
            for _ in 0..n_ic {
                let i = rng.random_range(0..self.ic.len());
                b.ic.push(self.ic[i]);
                b.ic_sample.push(self.ic_sample[i]);
                b.ic_f0.push(self.ic_f0[i]);
            }
        }
        b
    }

    pub fn check(&self, n_couples: usize) -> Result<(), ResidualError> {
        if self.dom.len() != self.dom_sample.len()
            || self.ic.len() != self.ic_sample.len()
            || self.ic.len() != self.ic_f0.len()
        {
            return Err(ResidualError::InvalidInput("collocation batch columns differ in length".into()));
        }
        if let Some(&index) = self.dom_sample.iter().chain(&self.ic_sample).find(|&&s| s >= n_couples) {
            return Err(ResidualError::SampleIndex { index, count: n_couples });
        }
        Ok(())
    }
}

fn draw_txv<R: Rng>(d: &PhaseDomain, rng: &mut R) -> [f64; 3] {
    [
        rng.random_range(0.0..=d.t_max),
        rng.random_range(d.x_min..d.x_max),
        rng.random_range(d.v_min..=d.v_max),
    ]
}

fn draw_xv<R: Rng>(d: &PhaseDomain, rng: &mut R) -> [f64; 2] {
    [rng.random_range(d.x_min..d.x_max), rng.random_range(d.v_min..=d.v_max)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residuals::{initial_conditions, ProblemId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn domain() -> PhaseDomain {
        PhaseDomain { t_max: 1.0, x_min: 0.0, x_max: 4.0 * std::f64::consts::PI, v_min: -6.0, v_max: 6.0 }
    }

    #[test]
    fn points_inside_domain_and_reproducible() {
        let init: Vec<_> =
            (0..3).map(|i| initial_conditions(ProblemId::Landau, 1.0, 0.04 + 0.01 * i as f64, 0.5).unwrap()).collect();
        let a = CollocationBatch::sample(&domain(), &init, 500, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = CollocationBatch::sample(&domain(), &init, 500, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let d = domain();
        for p in &a.dom {
            assert!(p[0] >= 0.0 && p[0] <= d.t_max && p[1] >= d.x_min && p[1] < d.x_max);
            assert!(p[2].abs() <= 6.0);
        }
        for ((p, &s), &f) in a.ic.iter().zip(&a.ic_sample).zip(&a.ic_f0) {
            assert_eq!(f, init[s].f0(p[0], p[1]));
        }
        a.check(3).unwrap();
        assert!(a.check(2).is_err());
    }

    #[test]
    fn per_couple_counts() {
        let init = vec![initial_conditions(ProblemId::Landau, 1.0, 0.05, 0.5).unwrap(); 4];
        let b = CollocationBatch::per_couple(&domain(), &init, 16, 8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.dom.len(), 64);
        assert_eq!(b.ic.len(), 32);
        for s in 0..4 {
            assert_eq!(b.dom_sample.iter().filter(|&&x| x == s).count(), 16);
        }
        let m = b.minibatch(10, 5, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!((m.dom.len(), m.ic.len()), (10, 5));
        m.check(4).unwrap();
    }
}
