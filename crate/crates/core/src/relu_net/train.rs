use std::time::Instant;

use super::{init_params, loss, loss_and_gradient, MlpParams, MlpSpec};
use crate::channel_model::SampleSet;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Step-size schedule over the whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from `learning_rate` to `learning_rate * final_fraction`.
    Cosine {
        final_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::adam(),
            learning_rate: 1e-3,
            schedule: LrSchedule::Constant,
            batch_size: 128,
            epochs: 200,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            let open = |b: f64| b > 0.0 && b < 1.0;
            if !open(beta1) || !open(beta2) {
                return Err(Error::invalid("adam betas must lie in (0, 1)"));
            }
            if eps.is_nan() || eps <= 0.0 {
                return Err(Error::invalid("adam eps must be > 0"));
            }
        }
        if let LrSchedule::Cosine { final_fraction } = self.schedule {
            if !(0.0..=1.0).contains(&final_fraction) {
                return Err(Error::invalid("cosine final_fraction must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    fn rate_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { final_fraction } => {
                let t = if total > 1 {
                    step as f64 / (total - 1) as f64
                } else {
                    0.0
                };
                let c = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
                self.learning_rate * (final_fraction + (1.0 - final_fraction) * c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_train_loss: f64,
    /// Full-dataset loss after each epoch.
    pub loss_curve: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
}

/// Stream tag for the shuffling generator, distinct from the init stream.
const SHUFFLE_STREAM: u64 = 0x5348_5546;

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Minimizes the empirical loss by mini-batch first-order descent, starting
/// from [`init_params`] seeded with `config.seed`.
pub fn train(
    spec: &MlpSpec,
    train_set: &SampleSet,
    config: &TrainConfig,
) -> Result<(MlpParams, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let start = Instant::now();
    let mut params = init_params(spec, config.seed);
    let mut shuffler = SimRng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM));
    let n = train_set.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState {
        m: vec![0.0; params.num_values()],
        v: vec![0.0; params.num_values()],
        t: 0,
    };
    let mut curve = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for _ in 0..config.epochs {
        if config.shuffle {
            shuffler.shuffle(&mut order);
        }
        for chunk in order.chunks(config.batch_size) {
            let batch = train_set.select(chunk);
            let (batch_loss, grad) = loss_and_gradient(&params, &batch)?;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged);
            }
            let lr = config.rate_at(step, total_steps);
            apply_update(&mut params, &grad, lr, &config.optimizer, &mut adam);
            step += 1;
        }
        let epoch_loss = loss(&params, train_set)?;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged);
        }
        curve.push(epoch_loss);
    }
    let final_train_loss = match curve.last() {
        Some(&l) => l,
        None => loss(&params, train_set)?,
    };
    Ok((
        params,
        TrainReport {
            final_train_loss,
            loss_curve: curve,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

fn apply_update(
    params: &mut MlpParams,
    grad: &MlpParams,
    lr: f64,
    opt: &Optimizer,
    state: &mut AdamState,
) {
    match *opt {
        Optimizer::Sgd => {
            for (p, g) in params.values_mut().zip(grad.values()) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let c1 = 1.0 - beta1.powi(state.t);
            let c2 = 1.0 - beta2.powi(state.t);
            let step = lr * c2.sqrt() / c1;
            for (((p, g), m), v) in params
                .values_mut()
                .zip(grad.values())
                .zip(state.m.iter_mut())
                .zip(state.v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= step * *m / (v.sqrt() + eps * c2.sqrt());
            }
        }
    }
}
