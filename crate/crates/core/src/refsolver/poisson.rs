//! Spectral solve of `-φ'' = rhs` on a periodic interval.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::RefError;

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    /// Zero-mean potential.
    pub phi: Vec<f64>,
    /// `E = -φ'`.
    pub e: Vec<f64>,
    /// Mean of the right-hand side that was projected out.
    pub removed_mean: f64,
}

/// Solve `-φ'' = rhs` for `rhs` sampled at `n` equispaced nodes of a period
/// of length `period`. A nonzero mean is removed and reported.
pub fn poisson_periodic(rhs: &[f64], period: f64) -> Result<PoissonSolution, RefError> {
    let n = rhs.len();
    if n < 2 {
        return Err(RefError::Grid(format!("transform needs at least 2 nodes, got {n}")));
    }
    if !(period > 0.0) {
        return Err(RefError::Grid(format!("period {period}")));
    }
    let mean = rhs.iter().sum::<f64>() / n as f64;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut hat: Vec<Complex<f64>> = rhs.iter().map(|&r| Complex::new(r - mean, 0.0)).collect();
    fwd.process(&mut hat);
    let mut phi_hat = vec![Complex::new(0.0, 0.0); n];
    let mut e_hat = vec![Complex::new(0.0, 0.0); n];
    let w = 2.0 * std::f64::consts::PI / period;
    for m in 1..n {
        let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        let k = w * signed;
        phi_hat[m] = hat[m] / (k * k);
        // the Nyquist mode has no well-defined derivative
        if 2 * m != n {
            e_hat[m] = -Complex::new(0.0, k) * phi_hat[m];
        }
    }
    inv.process(&mut phi_hat);
    inv.process(&mut e_hat);
    let s = 1.0 / n as f64;
    Ok(PoissonSolution {
        phi: phi_hat.iter().map(|c| c.re * s).collect(),
        e: e_hat.iter().map(|c| c.re * s).collect(),
        removed_mean: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn nodes(n: usize, period: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * period / n as f64).collect()
    }

    #[test]
    fn cosine_right_hand_side() {
        let x = nodes(64, 2.0 * PI);
        let rhs: Vec<f64> = x.iter().map(|x| x.cos()).collect();
        let s = poisson_periodic(&rhs, 2.0 * PI).unwrap();
        for (i, x) in x.iter().enumerate() {
            assert!((s.phi[i] - x.cos()).abs() < 1e-13);
            assert!((s.e[i] - x.sin()).abs() < 1e-13);
        }
        assert!(s.removed_mean.abs() < 1e-15);
    }

    #[test]
    fn zero_right_hand_side() {
        let s = poisson_periodic(&[0.0; 16], 3.0).unwrap();
        assert!(s.phi.iter().chain(&s.e).all(|&v| v == 0.0));
    }

    #[test]
    fn landau_potential() {
        let (h, a, k) = (1.05, 0.05, 0.5);
        let p = 2.0 * PI / k;
        let x = nodes(48, p);
        let rhs: Vec<f64> = x.iter().map(|x| h * a * (k * x).cos()).collect();
        let s = poisson_periodic(&rhs, p).unwrap();
        for (i, x) in x.iter().enumerate() {
            assert!((s.phi[i] - h * a * (k * x).cos() / (k * k)).abs() < 1e-13);
        }
    }

    #[test]
    fn spectral_round_trip() {
        let n = 32;
        let p = 5.0;
        let x = nodes(n, p);
        let w = 2.0 * PI / p;
        let rhs: Vec<f64> = x.iter().map(|x| (w * x).sin() - 0.3 * (3.0 * w * x).cos() + 0.1 * (7.0 * w * x).sin()).collect();
        let s = poisson_periodic(&rhs, p).unwrap();
        // -φ'' is multiplication by k² in Fourier space
        let mut planner = FftPlanner::<f64>::new();
        let mut hat: Vec<Complex<f64>> = s.phi.iter().map(|&r| Complex::new(r, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut hat);
        for (m, c) in hat.iter_mut().enumerate() {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            *c *= (w * signed).powi(2);
        }
        planner.plan_fft_inverse(n).process(&mut hat);
        for i in 0..n {
            assert!((hat[i].re / n as f64 - rhs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn nonzero_mean_is_projected() {
        let s = poisson_periodic(&[1.0; 8], 1.0).unwrap();
        assert!((s.removed_mean - 1.0).abs() < 1e-15);
        assert!(s.phi.iter().all(|v| v.abs() < 1e-15));
        assert!(poisson_periodic(&[1.0], 1.0).is_err());
    }
}
