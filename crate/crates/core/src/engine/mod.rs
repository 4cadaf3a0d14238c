//! The federated training loop: sample clients, train locally, clip, noise,
//! optionally sparsify, average, and account for privacy.

mod config;
mod output;

pub use config::{DataSource, ExperimentConfig, LocalTrainingConfig, Sparsifier, Variant};
pub use output::{config_hash, write_rounds_csv, write_sweep_csv, RunSummary, ROUNDS_CSV_HEADER};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accountant::{AccountantError, PrivacyLedger, RdpOrderGrid};
use crate::data::{dirichlet_partition, load_csv, synth_dataset, ClientShard, CsvSchema, DataError, Dataset};
use crate::mechanism::{self, kept_coordinates, sampled_count, MechanismError};
use crate::model::{evaluate, init_params, Batch, Evaluation, ModelError, ModelSpec, ParamVector};
use crate::optimizer::{run_local_round, OptimizerConfig, OptimizerError};
use crate::rng::{self, derive_seed, tag};
use crate::vecops;

const EVAL_BATCH: usize = 1024;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Accountant(#[from] AccountantError),
    #[error("non-finite aggregate in round {}", .0.round)]
    NonFinite(Box<AbortDump>),
}

/// State captured when a round produces a non-finite global model.
#[derive(Debug, Clone, Serialize)]
pub struct AbortDump {
    pub round: u64,
    pub sampled_clients: Vec<usize>,
    pub pre_clip_norms: Vec<f64>,
    pub clip_factors: Vec<f64>,
    pub global_norm_before: f64,
    pub non_finite_coordinates: usize,
}

/// One sampled client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub pre_clip_norm: f64,
    pub clip_factor: f64,
    /// Clipped, noised and (per variant) sparsified update.
    pub transmitted: ParamVector,
    pub mean_local_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub sampled_clients: Vec<usize>,
    pub pre_clip_norms: Vec<f64>,
    pub clip_factors: Vec<f64>,
    /// Mean clip factor over the sampled clients.
    pub mean_clip_factor: f64,
    /// Mean absolute deviation of the clip factors from their mean.
    pub clip_deviation: f64,
    pub mean_local_loss: f64,
    /// Accumulated epsilon after this round; `None` for non-private runs.
    pub epsilon: Option<f64>,
    pub train: Option<Evaluation>,
    pub test: Option<Evaluation>,
}

impl RoundRecord {
    pub fn mean_pre_clip_norm(&self) -> f64 {
        self.pre_clip_norms.iter().sum::<f64>() / self.pre_clip_norms.len() as f64
    }
}

/// `(mean, mean absolute deviation from the mean)`.
pub fn clip_factor_summary(factors: &[f64]) -> (f64, f64) {
    let n = factors.len() as f64;
    let mean = factors.iter().sum::<f64>() / n;
    let mad = factors.iter().map(|a| (a - mean).abs()).sum::<f64>() / n;
    (mean, mad)
}

/// Global model plus the privacy spent so far.
#[derive(Debug, Clone)]
pub struct EngineState {
    pub global: ParamVector,
    pub round: u64,
    pub ledger: Option<PrivacyLedger>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub epsilon: f64,
    pub delta: f64,
    pub best_order: f64,
    pub rounds: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub final_params: ParamVector,
    pub privacy: Option<PrivacyReport>,
    pub final_train: Evaluation,
    pub final_test: Evaluation,
}

/// Everything fixed for the duration of a run.
#[derive(Debug, Clone)]
pub struct Federation {
    config: ExperimentConfig,
    optimizer: OptimizerConfig,
    train: Dataset,
    test: Dataset,
    train_batches: Vec<Batch>,
    test_batches: Vec<Batch>,
    shards: Vec<ClientShard>,
    sampled: usize,
    kept: usize,
    zero_ledger: Option<PrivacyLedger>,
}

/// Loads the configured source and splits it into train and test.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), EngineError> {
    let full = match &cfg.data {
        DataSource::Synthetic {
            classes,
            samples,
            separation,
            seed,
        } => synth_dataset(*classes, cfg.model.input_dim(), *samples, *separation, *seed)?,
        DataSource::Csv {
            path,
            label_column,
            labels,
        } => {
            let schema = CsvSchema {
                label_column: label_column.clone(),
                labels: labels.clone(),
                ..CsvSchema::new(cfg.model.input_dim())
            };
            load_csv(path, &schema)?
        }
    };
    if full.len() < 2 {
        return Err(EngineError::Config {
            field: "data".into(),
            msg: "need at least two examples to split".into(),
        });
    }
    Ok(full.train_test_split(cfg.train_fraction, cfg.partition.seed))
}

impl Federation {
    pub fn new(config: ExperimentConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let (train, test) = load_data(&config)?;
        Self::with_data(config, train, test)
    }

    /// Builds a run over caller-supplied train and test sets.
    pub fn with_data(config: ExperimentConfig, train: Dataset, test: Dataset) -> Result<Self, EngineError> {
        config.validate()?;
        let spec = &config.model;
        for (name, ds) in [("train", &train), ("test", &test)] {
            if ds.dim() != spec.input_dim() {
                return Err(EngineError::Config {
                    field: "model.layer_sizes".into(),
                    msg: format!("input width {} but {name} data has {} features", spec.input_dim(), ds.dim()),
                });
            }
            if ds.class_count() > spec.class_count() {
                return Err(EngineError::Config {
                    field: "model.layer_sizes".into(),
                    msg: format!("{} outputs but {name} data has {} classes", spec.class_count(), ds.class_count()),
                });
            }
        }
        let shards = dirichlet_partition(&train, &config.partition)?;
        let m_total = config.partition.num_clients;
        let sampled = sampled_count(m_total, config.dp.client_sample_ratio);
        let kept = kept_coordinates(config.dp.sparsity_ratio, spec.param_count());
        let zero_ledger = if config.variant.is_private() {
            let ledger = PrivacyLedger::new(
                &RdpOrderGrid::default(),
                sampled as f64 / m_total as f64,
                config.dp.noise_multiplier,
                config.dp.resolved_delta(m_total),
            );
            Some(ledger.map_err(|e| match e {
                AccountantError::InvalidParam(msg) => EngineError::Config {
                    field: "dp.noise_multiplier".into(),
                    msg,
                },
                other => other.into(),
            })?)
        } else {
            None
        };
        Ok(Self {
            optimizer: config.optimizer_config(),
            train_batches: train.batches(EVAL_BATCH),
            test_batches: test.batches(EVAL_BATCH),
            train,
            test,
            shards,
            sampled,
            kept,
            zero_ledger,
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.config.model
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn test_batches(&self) -> &[Batch] {
        &self.test_batches
    }

    /// Clients per round, `m`.
    pub fn sampled_per_round(&self) -> usize {
        self.sampled
    }

    pub fn initial_state(&self) -> EngineState {
        EngineState {
            global: init_params(self.spec(), self.config.master_seed),
            round: 0,
            ledger: self.zero_ledger.clone(),
        }
    }

    /// Local training and privatization for one client, independent of
    /// every other client in the round.
    pub fn client_update(&self, global: &[f64], round: u64, client_id: usize) -> Result<ClientUpdate, EngineError> {
        let cfg = &self.config;
        let seed = cfg.master_seed;
        let client = client_id as u64;
        let outcome = run_local_round(
            global,
            &self.shards[client_id],
            &self.train,
            &self.optimizer,
            self.spec(),
            derive_seed(seed, &[tag::LOCAL_BATCH, round, client]),
        )?;
        let c = cfg.dp.clip_threshold;
        let pre_clip_norm = vecops::norm2(&outcome.delta);
        let (clip_factor, clipped) = if cfg.clipping_disabled {
            (1.0, outcome.delta)
        } else {
            let f = mechanism::clip_factor(&outcome.delta, c);
            (f, mechanism::clip_update(&outcome.delta, c))
        };
        let noised = if cfg.variant.is_private() {
            let mut rng = rng::stream(seed, &[tag::NOISE, round, client]);
            mechanism::add_noise(&clipped, c, cfg.dp.noise_multiplier, self.sampled, &mut rng)
        } else {
            clipped
        };
        let transmitted = match cfg.variant.sparsifier() {
            Sparsifier::None => noised,
            Sparsifier::TopK => mechanism::topk_sparsify(&noised, self.kept)?.0,
            Sparsifier::RandK => {
                let mut rng = rng::stream(seed, &[tag::SPARSIFY, round, client]);
                mechanism::randk_sparsify(&noised, self.kept, &mut rng)?.0
            }
        };
        let trace = &outcome.loss_trace;
        Ok(ClientUpdate {
            client_id,
            pre_clip_norm,
            clip_factor,
            transmitted,
            mean_local_loss: trace.iter().sum::<f64>() / trace.len() as f64,
        })
    }

    /// Executes round `state.round`, advancing `state` in place.
    pub fn run_round(&self, state: &mut EngineState) -> Result<RoundRecord, EngineError> {
        let t = state.round;
        let ids = sample_clients(
            self.config.partition.num_clients,
            self.config.dp.client_sample_ratio,
            t,
            self.config.master_seed,
        );
        let global = &state.global;
        let updates: Vec<ClientUpdate> = ids
            .par_iter()
            .map(|&id| self.client_update(global, t, id))
            .collect::<Result<_, _>>()?;
        let new_global = self.apply_updates(global, updates.clone());

        let pre_clip_norms: Vec<f64> = updates.iter().map(|u| u.pre_clip_norm).collect();
        let clip_factors: Vec<f64> = updates.iter().map(|u| u.clip_factor).collect();
        if !vecops::all_finite(&new_global) {
            return Err(EngineError::NonFinite(Box::new(AbortDump {
                round: t,
                sampled_clients: ids,
                non_finite_coordinates: new_global.iter().filter(|v| !v.is_finite()).count(),
                pre_clip_norms,
                clip_factors,
                global_norm_before: vecops::norm2(global),
            })));
        }

        let ledger = state.ledger.as_ref().map(|l| l.accumulate(1));
        let epsilon = ledger.as_ref().map(|l| l.epsilon().map(|e| e.0)).transpose()?;
        let (mean_clip_factor, clip_deviation) = clip_factor_summary(&clip_factors);
        let rounds_done = t + 1;
        let evaluate_now = rounds_done.is_multiple_of(self.config.eval_every) || rounds_done == self.config.rounds;
        let (train, test) = if evaluate_now {
            let (a, b) = self.evaluate(&new_global)?;
            (Some(a), Some(b))
        } else {
            (None, None)
        };

        let record = RoundRecord {
            round: t,
            sampled_clients: ids,
            mean_local_loss: updates.iter().map(|u| u.mean_local_loss).sum::<f64>() / updates.len() as f64,
            pre_clip_norms,
            clip_factors,
            mean_clip_factor,
            clip_deviation,
            epsilon,
            train,
            test,
        };
        *state = EngineState {
            global: new_global,
            round: rounds_done,
            ledger,
        };
        Ok(record)
    }

    /// `w + (1/m) sum(updates)`, summed in ascending client id regardless of
    /// the order `updates` arrive in.
    pub fn apply_updates(&self, global: &[f64], mut updates: Vec<ClientUpdate>) -> ParamVector {
        updates.sort_by_key(|u| u.client_id);
        let transmitted: Vec<ParamVector> = updates.into_iter().map(|u| u.transmitted).collect();
        let mean = mechanism::aggregate(&transmitted, self.sampled, global.len());
        vecops::add(global, &mean)
    }

    /// `(train, test)` evaluation of `params`.
    pub fn evaluate(&self, params: &[f64]) -> Result<(Evaluation, Evaluation), EngineError> {
        Ok((
            evaluate(params, &self.train_batches, self.spec())?,
            evaluate(params, &self.test_batches, self.spec())?,
        ))
    }

    /// Runs all configured rounds from the initial state.
    pub fn run(&self) -> Result<ExperimentResult, EngineError> {
        let mut state = self.initial_state();
        let mut records = Vec::with_capacity(self.config.rounds as usize);
        for _ in 0..self.config.rounds {
            let record = self.run_round(&mut state)?;
            log::debug!(
                "round {} eps {:?} mean clip {:.4}",
                record.round,
                record.epsilon,
                record.mean_clip_factor
            );
            records.push(record);
        }
        let (final_train, final_test) = match records.last() {
            Some(RoundRecord {
                train: Some(a),
                test: Some(b),
                ..
            }) => (*a, *b),
            _ => self.evaluate(&state.global)?,
        };
        let privacy = match &state.ledger {
            Some(l) => {
                let (epsilon, best_order) = l.epsilon()?;
                Some(PrivacyReport {
                    epsilon,
                    delta: l.delta(),
                    best_order,
                    rounds: l.rounds_elapsed(),
                })
            }
            None => None,
        };
        Ok(ExperimentResult {
            records,
            final_params: state.global,
            privacy,
            final_train,
            final_test,
        })
    }
}

/// `round(q M)` distinct client ids, uniform over subsets, sorted ascending.
/// Deterministic in `(master_seed, round)`.
pub fn sample_clients(num_clients: usize, q: f64, round: u64, master_seed: u64) -> Vec<usize> {
    let m = sampled_count(num_clients, q);
    let mut rng = rng::stream(master_seed, &[tag::SAMPLE_CLIENTS, round]);
    let mut ids = index::sample(&mut rng, num_clients, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Builds the federation and runs it to completion.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, EngineError> {
    Federation::new(cfg.clone())?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sparsity_ratio: f64,
    pub kept_coordinates: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub train_accuracy: f64,
    pub epsilon: Option<f64>,
    pub time_averaged_update_norm: f64,
}

/// Runs `base` once per sparsity ratio, changing nothing else.
pub fn sparsity_sweep(base: &ExperimentConfig, ratios: &[f64]) -> Result<Vec<SweepRow>, EngineError> {
    ratios
        .iter()
        .map(|&p| {
            let mut cfg = base.clone();
            cfg.dp.sparsity_ratio = p;
            let res = run_experiment(&cfg)?;
            let norms: Vec<f64> = res.records.iter().map(RoundRecord::mean_pre_clip_norm).collect();
            Ok(SweepRow {
                sparsity_ratio: p,
                kept_coordinates: kept_coordinates(p, cfg.model.param_count()),
                test_accuracy: res.final_test.accuracy,
                test_loss: res.final_test.mean_loss,
                train_accuracy: res.final_train.accuracy,
                epsilon: res.privacy.map(|r| r.epsilon),
                time_averaged_update_norm: norms.iter().sum::<f64>() / norms.len().max(1) as f64,
            })
        })
        .collect()
}
