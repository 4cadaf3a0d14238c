//! One client's local training for one round: `K` steps of SGD or SAM
//! starting from the current global model.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClientShard, Dataset};
use crate::model::{BatchObjective, ModelError, ModelSpec, Objective, ParamVector};
use crate::rng::{self, tag};
use crate::vecops;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("client {0} has an empty shard")]
    EmptyShard(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Sam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SAM radius `rho`; ignored by SGD.
    pub perturbation_radius: f64,
    pub local_steps: usize,
    pub batch_size: usize,
    /// Use the whole shard at every step instead of sampling a batch.
    pub full_batch: bool,
    /// Heavy-ball momentum, reset at the start of every round. 0 disables.
    pub momentum: f64,
    /// L2 weight decay added to the step direction. 0 disables.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sam,
            learning_rate: 0.1,
            perturbation_radius: 0.5,
            local_steps: 10,
            batch_size: 32,
            full_batch: false,
            momentum: 0.0,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.into()));
        // A zero step size is accepted: it is the degenerate "no training" run.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(self.perturbation_radius >= 0.0 && self.perturbation_radius.is_finite()) {
            return bad("perturbation_radius must be finite and >= 0");
        }
        if self.local_steps == 0 {
            return bad("local_steps must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and >= 0");
        }
        Ok(())
    }

    fn effective_radius(&self) -> f64 {
        match self.kind {
            OptimizerKind::Sgd => 0.0,
            OptimizerKind::Sam => self.perturbation_radius,
        }
    }
}

/// First-order SAM ascent step `rho * g / ||g||`; zero when `g = 0` or `rho = 0`.
pub fn sam_perturbation(grad: &[f64], rho: f64) -> ParamVector {
    let norm = vecops::norm2(grad);
    if norm == 0.0 || rho == 0.0 {
        return vec![0.0; grad.len()];
    }
    let s = rho / norm;
    grad.iter().map(|g| g * s).collect()
}

/// Gradient evaluated at `params + sam_perturbation(grad(params), rho)`.
pub fn sam_gradient(
    objective: &dyn Objective,
    params: &[f64],
    rho: f64,
) -> Result<ParamVector, ModelError> {
    let (_, grad) = objective.loss_and_grad(params)?;
    sam_gradient_from(objective, params, &grad, rho)
}

fn sam_gradient_from(
    objective: &dyn Objective,
    params: &[f64],
    grad: &[f64],
    rho: f64,
) -> Result<ParamVector, ModelError> {
    if rho == 0.0 {
        return Ok(grad.to_vec());
    }
    let perturbed = vecops::add(params, &sam_perturbation(grad, rho));
    Ok(objective.loss_and_grad(&perturbed)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    /// `w^{t,K} - w^{t,0}`.
    pub delta: ParamVector,
    /// Loss at the unperturbed iterate, one entry per step.
    pub loss_trace: Vec<f64>,
    /// Largest norm of any applied step direction.
    pub max_step_norm: f64,
}

/// Runs `cfg.local_steps` steps from `global_params` on `shard`.
///
/// Each step draws `batch_size` examples uniformly with replacement from the
/// shard using the stream keyed by `rng_seed`, unless `full_batch` is set.
pub fn run_local_round(
    global_params: &[f64],
    shard: &ClientShard,
    dataset: &Dataset,
    cfg: &OptimizerConfig,
    spec: &ModelSpec,
    rng_seed: u64,
) -> Result<LocalOutcome, OptimizerError> {
    cfg.validate()?;
    if shard.is_empty() {
        return Err(OptimizerError::EmptyShard(shard.client_id));
    }
    let mut rng = rng::stream(rng_seed, &[tag::LOCAL_BATCH]);
    let rho = cfg.effective_radius();
    let plain = cfg.momentum == 0.0 && cfg.weight_decay == 0.0;

    let mut w = global_params.to_vec();
    let mut velocity = if plain { Vec::new() } else { vec![0.0; w.len()] };
    let mut loss_trace = Vec::with_capacity(cfg.local_steps);
    let mut max_step_norm: f64 = 0.0;
    let full = if cfg.full_batch {
        Some(dataset.batch(&shard.indices)?)
    } else {
        None
    };
    let mut picks = vec![0usize; cfg.batch_size];

    for _ in 0..cfg.local_steps {
        let sampled;
        let batch = match &full {
            Some(b) => b,
            None => {
                for p in picks.iter_mut() {
                    *p = shard.indices[rng.random_range(0..shard.len())];
                }
                sampled = dataset.batch(&picks)?;
                &sampled
            }
        };
        let objective = BatchObjective::new(spec, batch);
        let (loss, grad) = objective.loss_and_grad(&w)?;
        loss_trace.push(loss);
        let step_dir = sam_gradient_from(&objective, &w, &grad, rho)?;

        if plain {
            max_step_norm = max_step_norm.max(vecops::norm2(&step_dir));
            vecops::axpy(-cfg.learning_rate, &step_dir, &mut w);
        } else {
            for ((v, g), wi) in velocity.iter_mut().zip(&step_dir).zip(&w) {
                *v = cfg.momentum * *v + g + cfg.weight_decay * wi;
            }
            max_step_norm = max_step_norm.max(vecops::norm2(&velocity));
            vecops::axpy(-cfg.learning_rate, &velocity, &mut w);
        }
    }

    Ok(LocalOutcome {
        delta: vecops::sub(&w, global_params),
        loss_trace,
        max_step_norm,
    })
}
