use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, PartitionConfig};
use crate::mechanism::DpConfig;
use crate::model::ModelSpec;
use crate::optimizer::{OptimizerConfig, OptimizerKind};

use super::EngineError;

/// Which algorithm a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// SGD local steps, clip, noise.
    DpFedavg,
    /// SAM local steps, clip, noise.
    DpFedsam,
    /// SAM, clip, noise, then keep the top `p d` coordinates.
    DpFedsamTopk,
    /// SAM, clip, noise, then keep `p d` random coordinates.
    DpFedsamRandk,
    /// SGD local steps, no noise; clipped unless `clipping_disabled`.
    FedavgNoiseless,
}

/// Post-noise sparsification applied before upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sparsifier {
    None,
    TopK,
    RandK,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::DpFedavg,
        Variant::DpFedsam,
        Variant::DpFedsamTopk,
        Variant::DpFedsamRandk,
        Variant::FedavgNoiseless,
    ];

    pub fn optimizer(self) -> OptimizerKind {
        match self {
            Variant::DpFedavg | Variant::FedavgNoiseless => OptimizerKind::Sgd,
            _ => OptimizerKind::Sam,
        }
    }

    pub fn is_private(self) -> bool {
        self != Variant::FedavgNoiseless
    }

    pub fn sparsifier(self) -> Sparsifier {
        match self {
            Variant::DpFedsamTopk => Sparsifier::TopK,
            Variant::DpFedsamRandk => Sparsifier::RandK,
            _ => Sparsifier::None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::DpFedavg => "dp_fedavg",
            Variant::DpFedsam => "dp_fedsam",
            Variant::DpFedsamTopk => "dp_fedsam_topk",
            Variant::DpFedsamRandk => "dp_fedsam_randk",
            Variant::FedavgNoiseless => "fedavg_noiseless",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// Local-training hyperparameters; the optimizer kind follows the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalTrainingConfig {
    pub learning_rate: f64,
    pub perturbation_radius: f64,
    pub local_steps: usize,
    pub batch_size: usize,
    pub full_batch: bool,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for LocalTrainingConfig {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            learning_rate: o.learning_rate,
            perturbation_radius: o.perturbation_radius,
            local_steps: o.local_steps,
            batch_size: o.batch_size,
            full_batch: o.full_batch,
            momentum: o.momentum,
            weight_decay: o.weight_decay,
        }
    }
}

impl LocalTrainingConfig {
    pub fn to_optimizer(&self, kind: OptimizerKind) -> OptimizerConfig {
        OptimizerConfig {
            kind,
            learning_rate: self.learning_rate,
            perturbation_radius: self.perturbation_radius,
            local_steps: self.local_steps,
            batch_size: self.batch_size,
            full_batch: self.full_batch,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// Where the examples come from. Either source is split into train and
/// test by `train_fraction` and the partition seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Gaussian mixture with one unit-norm center per class.
    Synthetic {
        classes: usize,
        samples: usize,
        separation: f64,
        seed: u64,
    },
    /// Headered CSV with `input_dim` feature columns and a label column.
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
}

fn default_label_column() -> String {
    CsvSchema::new(0).label_column
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            classes: 5,
            samples: 10_000,
            separation: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub model: ModelSpec,
    pub optimizer: LocalTrainingConfig,
    pub dp: DpConfig,
    pub partition: PartitionConfig,
    pub data: DataSource,
    pub train_fraction: f64,
    pub rounds: u64,
    pub master_seed: u64,
    pub eval_every: u64,
    /// Skip clipping; only honored by `fedavg_noiseless`.
    pub clipping_disabled: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::DpFedsam,
            model: ModelSpec::default(),
            optimizer: LocalTrainingConfig::default(),
            dp: DpConfig::default(),
            partition: PartitionConfig::default(),
            data: DataSource::default(),
            train_fraction: 0.8,
            rounds: 200,
            master_seed: 0,
            eval_every: 10,
            clipping_disabled: false,
        }
    }
}

impl ExperimentConfig {
    /// Checks every field that can be checked without loading data.
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |field: &str, msg: String| {
            Err(EngineError::Config {
                field: field.into(),
                msg,
            })
        };
        if let Err(e) = self.model.validate() {
            return bad("model", e.to_string());
        }
        if let Err(e) = self.optimizer_config().validate() {
            return bad("optimizer", e.to_string());
        }
        let m = self.partition.num_clients;
        if m == 0 {
            return bad("partition.num_clients", "must be >= 1".into());
        }
        if let Err(e) = self.dp.validate(m, self.model.param_count()) {
            return bad("dp", e.to_string());
        }
        if self.clipping_disabled && self.variant.is_private() {
            return bad(
                "clipping_disabled",
                format!("{} needs clipping for its privacy guarantee", self.variant),
            );
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction", "must be in (0, 1)".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be >= 1".into());
        }
        if let DataSource::Synthetic {
            classes,
            samples,
            separation,
            ..
        } = &self.data
        {
            if *classes < 2 || samples < classes {
                return bad("data", "need classes >= 2 and samples >= classes".into());
            }
            if !(separation.is_finite() && *separation >= 0.0) {
                return bad("data.separation", "must be finite and >= 0".into());
            }
            if *classes > self.model.class_count() {
                return bad(
                    "data.classes",
                    format!("model has only {} outputs", self.model.class_count()),
                );
            }
        }
        if self.variant.sparsifier() != Sparsifier::None && self.dp.sparsity_ratio == 1.0 {
            log::info!("{} with sparsity_ratio 1 keeps every coordinate", self.variant);
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        self.optimizer.to_optimizer(self.variant.optimizer())
    }

    /// The config with every implicit default written out.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.dp.failure_prob = Some(self.dp.resolved_delta(self.partition.num_clients));
        c
    }
}
