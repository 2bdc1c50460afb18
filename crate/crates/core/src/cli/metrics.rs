//! Network predictions on reference grids and the error metrics.

use std::io::Write;

use crate::kinetics::VelocityQuadrature;
use crate::networks::OperatorTriple;
use crate::refsolver::{electric_energy, relative_l2, RefError, SolutionField};
use crate::residuals::ProblemId;
use crate::training::InputCouple;

pub const METRIC_HEADER: &str = "metric,value,problem,epsilon,n_test";

/// `ρ = P(t, x)` and `E = -∂xΦ(t, x)` on the space-time grid of `times × x`.
/// With `moment_density` the density is `⟨F⟩` on that rule instead, as the
/// baseline loss never trains `P`.
pub fn predict_field(
    triple: &OperatorTriple,
    couple: &InputCouple,
    problem: ProblemId,
    epsilon: f64,
    (times, x): (&[f64], &[f64]),
    moment_density: Option<&VelocityQuadrature>,
) -> Result<SolutionField, crate::networks::NetworkError> {
    let points: Vec<[f64; 3]> = times.iter().flat_map(|&t| x.iter().map(move |&x| [t, x, 0.0])).collect();
    let vals = triple.eval_points(couple, &points)?;
    let rho = match moment_density {
        None => vals.rho,
        Some(q) => {
            let nodes: Vec<[f64; 3]> =
                points.iter().flat_map(|p| q.nodes.iter().map(move |&v| [p[0], p[1], v])).collect();
            let f = triple.eval_points(couple, &nodes)?.f;
            f.chunks_exact(q.len()).map(|row| row.iter().zip(&q.weights).map(|(a, w)| a * w).sum()).collect()
        }
    };
    Ok(SolutionField {
        problem,
        epsilon,
        times: times.to_vec(),
        x: x.to_vec(),
        rho,
        e: vals.e,
        v: Vec::new(),
        f: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rel_l2_rho: f64,
    pub rel_l2_e: f64,
    pub rel_l2_energy: f64,
    pub n_test: usize,
}

/// Relative error that treats an all-zero reference matched by an all-zero
/// prediction as exact.
fn rel(pred: &[f64], reference: &[f64]) -> Result<f64, RefError> {
    match relative_l2(pred, reference) {
        Err(RefError::ZeroReference) if pred.iter().all(|&p| p == 0.0) => Ok(0.0),
        r => r,
    }
}

/// Errors pooled over all `(prediction, reference)` pairs.
pub fn evaluate_fields(pairs: &[(SolutionField, SolutionField)]) -> Result<Metrics, RefError> {
    let (mut pr, mut rr, mut pe, mut re, mut pw, mut rw) = Default::default();
    let extend = |a: &mut Vec<f64>, b: &[f64]| a.extend_from_slice(b);
    for (p, r) in pairs {
        if p.nt() != r.nt() || p.nx() != r.nx() {
            return Err(RefError::Shape(format!("prediction {}×{} vs reference {}×{}", p.nt(), p.nx(), r.nt(), r.nx())));
        }
        extend(&mut pr, &p.rho);
        extend(&mut rr, &r.rho);
        extend(&mut pe, &p.e);
        extend(&mut re, &r.e);
        let dx = match r.x.as_slice() {
            [a, b, ..] => b - a,
            _ => 1.0,
        };
        extend(&mut pw, &electric_energy(&p.e, p.nx(), dx));
        extend(&mut rw, &electric_energy(&r.e, r.nx(), dx));
    }
    Ok(Metrics {
        rel_l2_rho: rel(&pr, &rr)?,
        rel_l2_e: rel(&pe, &re)?,
        rel_l2_energy: rel(&pw, &rw)?,
        n_test: pairs.len(),
    })
}

impl Metrics {
    pub fn rows(&self) -> [(&'static str, f64); 3] {
        [("rel_l2_rho", self.rel_l2_rho), ("rel_l2_e", self.rel_l2_e), ("rel_l2_energy", self.rel_l2_energy)]
    }

    pub fn write_csv<W: Write>(&self, mut w: W, problem: ProblemId, epsilon: f64) -> std::io::Result<()> {
        writeln!(w, "{METRIC_HEADER}")?;
        for (name, v) in self.rows() {
            writeln!(w, "{name},{v:e},{problem},{epsilon:e},{}", self.n_test)?;
        }
        w.flush()
    }
}
