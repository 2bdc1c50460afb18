//! Experiment configuration read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, ParamRanges, SensorGrid, TrainError};
use crate::kinetics::{CollisionKind, CollisionSpec, CrossSection, VelocityQuadrature};
use crate::networks::TripleConfig;
use crate::residuals::{EpsProfile, LossKind, LossSetup, PenaltyWeights, PhaseDomain, PiWeights, ProblemId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub id: ProblemId,
    /// Wave number of the initial perturbation.
    pub k: f64,
    pub epsilon: EpsProfile,
    pub collision: CollisionKind,
    pub cross_section: CrossSection,
    /// Gauss-Legendre nodes for velocity moments and collision integrals.
    pub quad_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub alpha: [f64; 2],
    pub h: [f64; 2],
    pub n_train: usize,
    pub n_test: usize,
    /// Collocation pool per training couple, redrawn every epoch.
    pub pool_dom: usize,
    pub pool_ic: usize,
    /// Tuples per iteration.
    pub batch_dom: usize,
    pub batch_ic: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3_rho: f64,
    pub lambda3_f: f64,
    pub lambda3_phi: f64,
    pub lambda4: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let (a, p) = (PenaltyWeights::default(), PiWeights::default());
        WeightsSection {
            lambda1: a.lambda1,
            lambda2: a.lambda2,
            lambda3_rho: a.lambda3_rho,
            lambda3_f: a.lambda3_f,
            lambda3_phi: a.lambda3_phi,
            lambda4: a.lambda4,
            mu1: p.mu1,
            mu2: p.mu2,
            mu3: p.mu3,
        }
    }
}

impl WeightsSection {
    pub fn penalty(&self) -> PenaltyWeights {
        PenaltyWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3_rho: self.lambda3_rho,
            lambda3_f: self.lambda3_f,
            lambda3_phi: self.lambda3_phi,
            lambda4: self.lambda4,
        }
    }

    pub fn pi(&self) -> PiWeights {
        PiWeights { mu1: self.mu1, mu2: self.mu2, mu3: self.mu3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: u64,
}

impl OptimizerSection {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr0: self.lr0,
            decay_rate: self.decay_rate,
            decay_every: self.decay_every,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSection {
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub log_every: u64,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Validation cadence for early stopping; 0 disables it.
    pub validate_every: u64,
    pub patience: usize,
    /// Fixed validation points per test couple.
    pub validation_dom: usize,
    pub validation_ic: usize,
    /// Train the two-network baseline loss instead of the AP loss.
    pub baseline_pi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub domain: PhaseDomain,
    pub sampling: SamplingSection,
    pub network: TripleConfig,
    pub weights: WeightsSection,
    pub optimizer: OptimizerSection,
    pub runtime: RuntimeSection,
}

impl ExperimentConfig {
    /// Full-scale settings of `problem` at scale `eps` (ignored for the
    /// mixing problem, whose profile is fixed).
    pub fn preset(problem: ProblemId, eps: f64) -> Self {
        let kinetic = eps >= 0.5;
        let (collision, cross_section) = match problem {
            ProblemId::Landau => (CollisionKind::FokkerPlanck, CrossSection::Unit),
            ProblemId::DoublePeak => (CollisionKind::Isotropic, CrossSection::Unit),
            ProblemId::TwoStream => (CollisionKind::NonDegenerate, CrossSection::Gaussian),
            ProblemId::BumpOnTail | ProblemId::Mixing => (CollisionKind::Degenerate, CrossSection::Gaussian),
        };
        let k = 0.5;
        let (x_min, x_max) = problem.x_range(k);
        let t_max = match problem {
            ProblemId::Landau => 5.0,
            ProblemId::Mixing => 0.2,
            _ => 1.0,
        };
        let v = problem.v_max();
        let lambda1 = match (problem, kinetic) {
            (ProblemId::Mixing, _) => 1.0,
            (ProblemId::Landau, true) => 100.0,
            (ProblemId::Landau, false) => 500.0,
            (_, true) => 20.0,
            (_, false) => 100.0,
        };
        let (epsilon, h) = if problem == ProblemId::Mixing {
            (EpsProfile::Mixing { epsilon0: 1e-3 }, [0.80, 0.85])
        } else {
            (EpsProfile::Constant { epsilon: eps }, [0.9, 1.1])
        };
        let mixing = problem == ProblemId::Mixing;
        ExperimentConfig {
            problem: ProblemSection { id: problem, k, epsilon, collision, cross_section, quad_nodes: 16 },
            domain: PhaseDomain { t_max, x_min, x_max, v_min: -v, v_max: v },
            sampling: SamplingSection {
                alpha: if mixing { [0.0, 0.0] } else { [0.04, 0.06] },
                h,
                n_train: 512,
                n_test: 128,
                pool_dom: 200,
                pool_ic: 100,
                batch_dom: 40_000,
                batch_ic: 20_000,
            },
            network: TripleConfig::default(),
            weights: WeightsSection { lambda1, ..WeightsSection::default() },
            optimizer: OptimizerSection {
                lr0: 1e-3,
                decay_rate: 0.9,
                decay_every: 1000,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                iterations: 50_000,
            },
            runtime: RuntimeSection {
                seed: 0,
                threads: 0,
                log_every: 100,
                checkpoint_every: 5000,
                validate_every: if mixing { 500 } else { 0 },
                patience: 10,
                validation_dom: 64,
                validation_ic: 32,
                baseline_pi: false,
            },
        }
    }

    /// Single-CPU variant of [`Self::preset`]: a 3×32 network with latent
    /// width 32, small batches, unit penalties and 20k iterations.
    pub fn desk(problem: ProblemId, eps: f64) -> Self {
        let mut c = Self::preset(problem, eps);
        c.network = TripleConfig { width: 32, depth: 3, latent: 32, ..TripleConfig::default() };
        c.sampling.n_train = 32;
        c.sampling.n_test = 8;
        c.sampling.pool_dom = 512;
        c.sampling.pool_ic = 256;
        c.sampling.batch_dom = 256;
        c.sampling.batch_ic = 128;
        c.weights = WeightsSection::default();
        c.optimizer.iterations = 20_000;
        c.runtime.checkpoint_every = 0;
        c
    }

    pub fn from_toml_str(s: &str) -> Result<Self, TrainError> {
        let c: ExperimentConfig = toml::from_str(s).map_err(|e| TrainError::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        self.domain.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        let s = &self.sampling;
        if s.n_train == 0 {
            return bad("sampling.n_train must be positive");
        }
        if s.alpha[0] > s.alpha[1] || s.h[0] > s.h[1] || s.h[0] <= 0.0 {
            return bad("sampling ranges must be ordered with positive h");
        }
        if s.batch_dom == 0 || s.pool_dom == 0 {
            return bad("domain batch and pool sizes must be positive");
        }
        if self.problem.quad_nodes < 2 {
            return bad("problem.quad_nodes must be at least 2");
        }
        if !(self.problem.k > 0.0) {
            return bad("problem.k must be positive");
        }
        if let EpsProfile::Constant { epsilon } = self.problem.epsilon {
            if !(epsilon >= 0.0) {
                return bad("epsilon must be non-negative");
            }
        }
        if matches!(self.problem.epsilon, EpsProfile::Mixing { .. })
            && (self.domain.x_min < -1.0 || self.domain.x_max > 1.0)
        {
            return bad("the mixing profile is defined on [-1, 1]");
        }
        if self.network.sensors_x == 0 || self.network.sensors_v == 0 || self.network.width == 0 {
            return bad("network sizes must be positive");
        }
        if !(self.optimizer.lr0 > 0.0) || self.optimizer.decay_every == 0 {
            return bad("optimizer.lr0 and optimizer.decay_every must be positive");
        }
        if self.runtime.log_every == 0 {
            return bad("runtime.log_every must be positive");
        }
        if self.runtime.validate_every > 0 && self.runtime.patience == 0 {
            return bad("runtime.patience must be at least 1 when validating");
        }
        Ok(())
    }

    pub fn sensor_grid(&self) -> SensorGrid {
        SensorGrid { sensors_x: self.network.sensors_x, sensors_v: self.network.sensors_v }
    }

    pub fn ranges(&self) -> ParamRanges {
        ParamRanges { alpha: self.sampling.alpha, h: self.sampling.h }
    }

    pub fn loss_kind(&self) -> LossKind {
        if self.runtime.baseline_pi {
            LossKind::Pi(self.weights.pi())
        } else {
            LossKind::Ap(self.weights.penalty())
        }
    }

    pub fn collision_spec(&self) -> Result<CollisionSpec, TrainError> {
        let quad = VelocityQuadrature::gauss_legendre(self.problem.quad_nodes, self.domain.v_min, self.domain.v_max)
            .map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(CollisionSpec::new(self.problem.collision, self.problem.cross_section, quad))
    }

    pub fn loss_setup(&self) -> Result<LossSetup, TrainError> {
        Ok(LossSetup { kind: self.loss_kind(), eps: self.problem.epsilon, spec: self.collision_spec()? })
    }
}
