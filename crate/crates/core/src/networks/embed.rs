//! Fourier features that make the trunk exactly periodic in x.

use crate::diffcore::Real;

/// `(cos ωx, sin ωx, cos 2ωx, sin 2ωx, ...)` with `ω = 2π/period`.
pub fn fourier_embed<R: Real>(x: R, period: f64, modes: usize) -> Vec<R> {
    let omega = 2.0 * std::f64::consts::PI / period;
    let mut out = Vec::with_capacity(2 * modes);
    for j in 1..=modes {
        let arg = x * (omega * j as f64);
        out.push(arg.cos());
        out.push(arg.sin());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{seed_coordinates, Dir, Pair};
    use std::f64::consts::PI;

    #[test]
    fn origin_maps_to_unit_cosine() {
        for p in [1.0, 2.0, 4.0 * PI, 17.3] {
            assert_eq!(fourier_embed(0.0, p, 1), vec![1.0, 0.0]);
        }
    }

    #[test]
    fn landau_period_quarter_turn() {
        let e = fourier_embed(PI, 4.0 * PI, 1);
        assert!(e[0].abs() < 1e-15);
        assert!((e[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_including_derivatives() {
        let p = 4.0 * PI;
        for &x0 in &[-3.0, 0.1, 2.5, 7.0] {
            let (_, a, _) = seed_coordinates(0.0, x0, 0.0, &[Dir::X], &[Pair::XX]).unwrap();
            let (_, b, _) = seed_coordinates(0.0, x0 + p, 0.0, &[Dir::X], &[Pair::XX]).unwrap();
            for (u, w) in fourier_embed(a, p, 3).iter().zip(fourier_embed(b, p, 3)) {
                assert!((u.val - w.val).abs() < 1e-12);
                assert!((u.d(Dir::X) - w.d(Dir::X)).abs() < 1e-12);
                assert!((u.dd(Pair::XX) - w.dd(Pair::XX)).abs() < 1e-12);
            }
        }
    }
}
