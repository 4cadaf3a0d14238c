//! Deterministic simulation of client-level differentially private federated
//! learning with SGD or sharpness-aware local training.

pub mod accountant;
pub mod bounds;
pub mod checkpoint;
pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod mechanism;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod stats;
pub mod vecops;

pub use accountant::{rdp_to_dp, AccountantError, PrivacyLedger, RdpOrderGrid};
pub use data::{ClientShard, Dataset, Heterogeneity, PartitionConfig};
pub use engine::{ExperimentConfig, Federation, RoundRecord, Variant};
pub use mechanism::DpConfig;
pub use model::{Activation, ModelSpec, ParamVector};
pub use optimizer::{OptimizerConfig, OptimizerKind};
