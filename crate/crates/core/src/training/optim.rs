//! Adam with step decay, early stopping, and the mixing-regime ε profile.

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr0: 1e-3, decay_rate: 0.9, decay_every: 1000, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    /// `lr0 · rate^⌊iter / every⌋`.
    pub fn learning_rate(&self, iter: u64) -> f64 {
        self.lr0 * self.decay_rate.powi((iter / self.decay_every.max(1)) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken.
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update at iteration `iter` (which sets the
/// learning rate).
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    iter: u64,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(TrainError::Shape(format!(
            "params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite(format!("gradient entry {i}")));
    }
    state.t += 1;
    let lr = cfg.learning_rate(iter);
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= lr * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Patience-based early stopping on a validation stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_rel_improvement: f64,
    best: f64,
    best_check: usize,
    checks: usize,
    stale: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Result<Self, TrainError> {
        if patience == 0 {
            return Err(TrainError::Config("early-stop patience must be at least 1".into()));
        }
        Ok(EarlyStop {
            patience,
            min_rel_improvement: 1e-3,
            best: f64::INFINITY,
            best_check: 0,
            checks: 0,
            stale: 0,
        })
    }

    /// Record one validation loss. Returns `(improved, stop)`.
    pub fn observe(&mut self, val: f64) -> (bool, bool) {
        self.checks += 1;
        let improved = val.is_finite() && (self.best.is_infinite() || val < self.best * (1.0 - self.min_rel_improvement));
        if improved {
            self.best = val;
            self.best_check = self.checks;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        (improved, self.stale >= self.patience)
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// 1-based index of the check that produced the best value.
    pub fn best_check(&self) -> usize {
        self.best_check
    }
}

/// Apply [`EarlyStop`] to a whole stream; returns the 1-based check at which
/// it signals stop, if any.
pub fn early_stop(stream: &[f64], patience: usize) -> Result<Option<usize>, TrainError> {
    let mut es = EarlyStop::new(patience)?;
    for (i, &v) in stream.iter().enumerate() {
        if es.observe(v).1 {
            return Ok(Some(i + 1));
        }
    }
    Ok(None)
}

/// `ε0 + ½(tanh(5 - 10x) + tanh(5 + 10x))` on `[-1, 0.3]`, `ε0` on `(0.3, 1]`.
pub fn mixing_epsilon(x: f64, eps0: f64) -> Result<f64, TrainError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(TrainError::Config(format!("mixing profile defined on [-1, 1], got x = {x}")));
    }
    Ok(if x <= 0.3 { eps0 + 0.5 * ((5.0 - 10.0 * x).tanh() + (5.0 + 10.0 * x).tanh()) } else { eps0 })
}
