//! Operator input couples and their sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::residuals::{initial_conditions, InitialData, PhaseDomain, ProblemId, ResidualError};

/// One operator input `u = (f0, h)` on the sensor grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCouple {
    /// `f0(x_l, v_q)`, row-major in `l`.
    pub f0_sensors: Vec<f64>,
    pub h_sensors: Vec<f64>,
    pub h: f64,
    pub alpha: f64,
}

/// Equidistant sensor grid: `L` periodic points in `x` (right end
/// excluded) and `Q` points spanning `[v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorGrid {
    pub sensors_x: usize,
    pub sensors_v: usize,
}

impl SensorGrid {
    pub fn x_points(&self, d: &PhaseDomain) -> Vec<f64> {
        let dx = d.period() / self.sensors_x as f64;
        (0..self.sensors_x).map(|l| d.x_min + l as f64 * dx).collect()
    }

    pub fn v_points(&self, d: &PhaseDomain) -> Vec<f64> {
        if self.sensors_v == 1 {
            return vec![0.5 * (d.v_min + d.v_max)];
        }
        let dv = (d.v_max - d.v_min) / (self.sensors_v - 1) as f64;
        (0..self.sensors_v).map(|q| d.v_min + q as f64 * dv).collect()
    }
}

impl InputCouple {
    pub fn from_initial(init: &InitialData, grid: SensorGrid, domain: &PhaseDomain) -> Self {
        let xs = grid.x_points(domain);
        let vs = grid.v_points(domain);
        let f0_sensors = xs.iter().flat_map(|&x| vs.iter().map(move |&v| init.f0(x, v))).collect();
        InputCouple { f0_sensors, h_sensors: vec![init.h; grid.sensors_x], h: init.h, alpha: init.alpha }
    }
}

/// Ranges the couple parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRanges {
    pub alpha: [f64; 2],
    pub h: [f64; 2],
}

/// Draw `n_train + n_test` couples; couple `i` comes from its own
/// sub-stream so membership does not depend on the split sizes.
pub fn sample_couples(
    problem: ProblemId,
    k: f64,
    ranges: &ParamRanges,
    grid: SensorGrid,
    domain: &PhaseDomain,
    n: usize,
    seed: u64,
) -> Result<Vec<(InputCouple, InitialData)>, ResidualError> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let h = draw(&mut rng, ranges.h);
            // the mixing problem has no perturbation parameter
            let alpha = if problem == ProblemId::Mixing { 0.0 } else { draw(&mut rng, ranges.alpha) };
            let init = initial_conditions(problem, h, alpha, k)?;
            Ok((InputCouple::from_initial(&init, grid, domain), init))
        })
        .collect()
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn landau_domain() -> PhaseDomain {
        PhaseDomain { t_max: 5.0, x_min: 0.0, x_max: 4.0 * PI, v_min: -6.0, v_max: 6.0 }
    }

    #[test]
    fn landau_sensor_value() {
        let init = initial_conditions(ProblemId::Landau, 1.0, 0.05, 0.5).unwrap();
        let grid = SensorGrid { sensors_x: 32, sensors_v: 33 };
        let u = InputCouple::from_initial(&init, grid, &landau_domain());
        // x_0 = 0 and v_16 = 0
        assert!((u.f0_sensors[16] - 1.05 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(u.h_sensors, vec![1.0; 32]);
        assert!(u.f0_sensors.iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn draws_are_deterministic_distinct_and_in_range() {
        let r = ParamRanges { alpha: [0.04, 0.06], h: [0.9, 1.1] };
        let grid = SensorGrid { sensors_x: 4, sensors_v: 4 };
        let a = sample_couples(ProblemId::Landau, 0.5, &r, grid, &landau_domain(), 640, 7).unwrap();
        let b = sample_couples(ProblemId::Landau, 0.5, &r, grid, &landau_domain(), 640, 7).unwrap();
        assert_eq!(a, b);
        for (u, _) in &a {
            assert!((0.04..=0.06).contains(&u.alpha) && (0.9..=1.1).contains(&u.h));
        }
        let mut keys: Vec<(u64, u64)> = a.iter().map(|(u, _)| (u.h.to_bits(), u.alpha.to_bits())).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 640);
        let prefix = sample_couples(ProblemId::Landau, 0.5, &r, grid, &landau_domain(), 10, 7).unwrap();
        assert_eq!(&a[..10], &prefix[..]);
    }

    #[test]
    fn mixing_draws_h_only() {
        let r = ParamRanges { alpha: [0.04, 0.06], h: [0.80, 0.85] };
        let d = PhaseDomain { t_max: 0.2, x_min: -1.0, x_max: 1.0, v_min: -6.0, v_max: 6.0 };
        let c = sample_couples(ProblemId::Mixing, 0.5, &r, SensorGrid { sensors_x: 4, sensors_v: 4 }, &d, 5, 1).unwrap();
        assert!(c.iter().all(|(u, _)| u.alpha == 0.0 && (0.80..=0.85).contains(&u.h)));
    }
}
