//! The optimization loop.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, sample_couples, AdamState, EarlyStop, ExperimentConfig, InputCouple, TrainError};
use crate::networks::OperatorTriple;
use crate::residuals::{loss_and_gradient, CollocationBatch, InitialData, LossBreakdown, LossSetup};

/// Couples together with the initial data they were built from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub couples: Vec<InputCouple>,
    pub initial: Vec<InitialData>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.couples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.couples.is_empty()
    }

    fn from_pairs(pairs: Vec<(InputCouple, InitialData)>) -> Self {
        let (couples, initial) = pairs.into_iter().unzip();
        Split { couples, initial }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
}

/// Draw `n_train + n_test` couples; the first `n_train` form the training split.
pub fn sample_dataset(config: &ExperimentConfig, seed: u64) -> Result<Dataset, TrainError> {
    let s = &config.sampling;
    let mut pairs = sample_couples(
        config.problem.id,
        config.problem.k,
        &config.ranges(),
        config.sensor_grid(),
        &config.domain,
        s.n_train + s.n_test,
        seed,
    )?;
    let test = pairs.split_off(s.n_train);
    Ok(Dataset { train: Split::from_pairs(pairs), test: Split::from_pairs(test) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iter: u64,
    pub lr: f64,
    /// Minibatch loss before the update of this iteration.
    pub loss: LossBreakdown,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<LogRecord>,
    /// `(iteration, validation loss)` pairs.
    pub validation: Vec<(u64, f64)>,
    /// Iteration after which early stopping ended the run.
    pub stopped_at: Option<u64>,
    /// Iteration whose parameters were returned when validating.
    pub best_iter: Option<u64>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "iter,lr,total,kinetic,mass,poisson,consistency,ic_rho,ic_f,ic_phi,wall_s";

    pub fn csv_row(r: &LogRecord) -> String {
        let mut s = format!("{},{:e},{:e}", r.iter, r.lr, r.loss.total);
        for c in r.loss.components() {
            s.push_str(&format!(",{c:e}"));
        }
        s.push_str(&format!(",{:.3}", r.wall_s));
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(w, "{}", Self::csv_row(r))?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }
}

/// Hooks for streaming logs and checkpoints out of a run.
pub trait TrainObserver: Send {
    fn logged(&mut self, _record: &LogRecord) -> Result<(), TrainError> {
        Ok(())
    }

    fn checkpoint(&mut self, _iter: u64, _triple: &OperatorTriple) -> Result<(), TrainError> {
        Ok(())
    }
}

pub struct Silent;

impl TrainObserver for Silent {}

pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

pub fn train(config: &ExperimentConfig, dataset: &Dataset) -> Result<(OperatorTriple, TrainHistory), TrainError> {
    train_with(config, dataset, &mut Silent)
}

pub fn train_with(
    config: &ExperimentConfig,
    dataset: &Dataset,
    obs: &mut dyn TrainObserver,
) -> Result<(OperatorTriple, TrainHistory), TrainError> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(TrainError::Config("empty training split".into()));
    }
    let expected = config.network.sensors_x * config.network.sensors_v;
    if dataset.train.couples.iter().chain(&dataset.test.couples).any(|c| c.f0_sensors.len() != expected) {
        return Err(TrainError::Shape(format!("dataset sensors do not match the network's {expected}")));
    }
    if dataset.train.initial.iter().any(|i| i.problem != config.problem.id) {
        return Err(TrainError::Config("dataset was generated for a different problem".into()));
    }
    let threads = config.runtime.threads;
    if threads == 0 {
        return run(config, dataset, obs);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    pool.install(|| run(config, dataset, obs))
}

fn run(
    config: &ExperimentConfig,
    dataset: &Dataset,
    obs: &mut dyn TrainObserver,
) -> Result<(OperatorTriple, TrainHistory), TrainError> {
    let seed = config.runtime.seed;
    let mut triple = OperatorTriple::init(seed, &config.network, config.domain.period())?;
    let mut history = TrainHistory::default();
    let iterations = config.optimizer.iterations;
    if iterations == 0 {
        return Ok((triple, history));
    }
    let setup = config.loss_setup()?;
    let adam = config.optimizer.adam();
    let s = &config.sampling;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let draw_pool = |rng: &mut ChaCha8Rng| {
        CollocationBatch::per_couple(&config.domain, &dataset.train.initial, s.pool_dom, s.pool_ic, rng)
    };
    let mut pool = draw_pool(&mut rng)?;
    let epoch = pool.dom.len().div_ceil(s.batch_dom).max(1) as u64;

    let rt = &config.runtime;
    let mut validation = None;
    if rt.validate_every > 0 && !dataset.test.is_empty() {
        let mut vrng = ChaCha8Rng::seed_from_u64(seed);
        vrng.set_stream(2);
        let vb = CollocationBatch::per_couple(
            &config.domain,
            &dataset.test.initial,
            rt.validation_dom,
            rt.validation_ic,
            &mut vrng,
        )?;
        validation = Some((vb, EarlyStop::new(rt.patience)?, triple.clone()));
    }

    let mut params = triple.flat_params();
    let mut state = AdamState::new(params.len());
    let start = Instant::now();
    for iter in 0..iterations {
        if iter > 0 && iter % epoch == 0 {
            pool = draw_pool(&mut rng)?;
        }
        let batch = pool.minibatch(s.batch_dom, s.batch_ic, &mut rng);
        let lg = loss_and_gradient(&triple, &dataset.train.couples, &batch, &setup)?;
        let loss = lg.breakdown;
        if let Some(name) = loss.first_non_finite() {
            return Err(TrainError::NonFinite(format!("loss component {name} at iteration {iter}")));
        }
        if loss.total > DIVERGENCE_THRESHOLD {
            return Err(TrainError::Diverged { iter, total: loss.total });
        }
        if iter % rt.log_every == 0 || iter + 1 == iterations {
            let rec = LogRecord { iter, lr: adam.learning_rate(iter), loss, wall_s: start.elapsed().as_secs_f64() };
            obs.logged(&rec)?;
            history.records.push(rec);
        }
        adam_step(&mut params, &lg.grad.flat_params(), &mut state, iter, &adam).map_err(|e| match e {
            TrainError::NonFinite(what) => TrainError::NonFinite(format!(
                "{what} at iteration {iter} (loss terms {:?})",
                loss.components()
            )),
            other => other,
        })?;
        triple.set_flat_params(&params)?;
        let done = iter + 1;
        if rt.checkpoint_every > 0 && done % rt.checkpoint_every == 0 {
            obs.checkpoint(done, &triple)?;
        }
        if let Some((vb, es, best)) = validation.as_mut() {
            if done % rt.validate_every == 0 {
                let v = validation_loss(&triple, &dataset.test.couples, vb, &setup)?;
                history.validation.push((done, v));
                let (improved, stop) = es.observe(v);
                if improved {
                    *best = triple.clone();
                    history.best_iter = Some(done);
                }
                if stop {
                    history.stopped_at = Some(done);
                    break;
                }
            }
        }
    }
    if let Some((_, _, best)) = validation {
        if history.best_iter.is_some() {
            triple = best;
        }
    }
    Ok((triple, history))
}

fn validation_loss(
    triple: &OperatorTriple,
    couples: &[InputCouple],
    batch: &CollocationBatch,
    setup: &LossSetup,
) -> Result<f64, TrainError> {
    Ok(crate::residuals::loss_value(triple, couples, batch, setup)?.total)
}
