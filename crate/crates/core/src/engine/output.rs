use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::model::Evaluation;

use super::{ExperimentConfig, ExperimentResult, PrivacyReport, RoundRecord, SweepRow};

pub const ROUNDS_CSV_HEADER: [&str; 13] = [
    "round",
    "sampled_clients",
    "pre_clip_norms",
    "clip_factors",
    "mean_clip_factor",
    "clip_deviation",
    "mean_pre_clip_norm",
    "mean_local_loss",
    "epsilon",
    "train_accuracy",
    "train_loss",
    "test_accuracy",
    "test_loss",
];

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per round. Floats use the shortest representation that parses
/// back to the same value, so equal records give equal bytes. Per-client
/// lists are `;`-separated in ascending client id.
pub fn write_rounds_csv<W: Write>(writer: W, records: &[RoundRecord]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(ROUNDS_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            join(&r.sampled_clients),
            join(&r.pre_clip_norms),
            join(&r.clip_factors),
            r.mean_clip_factor.to_string(),
            r.clip_deviation.to_string(),
            r.mean_pre_clip_norm().to_string(),
            r.mean_local_loss.to_string(),
            opt(r.epsilon),
            opt(r.train.map(|e| e.accuracy)),
            opt(r.train.map(|e| e.mean_loss)),
            opt(r.test.map(|e| e.accuracy)),
            opt(r.test.map(|e| e.mean_loss)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record([
        "sparsity_ratio",
        "kept_coordinates",
        "test_accuracy",
        "test_loss",
        "train_accuracy",
        "epsilon",
        "time_averaged_update_norm",
    ])?;
    for r in rows {
        w.write_record([
            r.sparsity_ratio.to_string(),
            r.kept_coordinates.to_string(),
            r.test_accuracy.to_string(),
            r.test_loss.to_string(),
            r.train_accuracy.to_string(),
            opt(r.epsilon),
            r.time_averaged_update_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of the compact JSON encoding of the resolved config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(&cfg.resolved()).expect("config serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub variant: String,
    pub rounds: u64,
    pub clients_per_round: usize,
    pub param_count: usize,
    pub privacy: Option<PrivacyReport>,
    pub final_train: Evaluation,
    pub final_test: Evaluation,
    /// Mean over rounds of the per-round mean pre-clip norm.
    pub time_averaged_update_norm: Option<f64>,
    pub config: ExperimentConfig,
}

impl RunSummary {
    pub fn new(cfg: &ExperimentConfig, clients_per_round: usize, result: &ExperimentResult) -> Self {
        let norms: Vec<f64> = result.records.iter().map(RoundRecord::mean_pre_clip_norm).collect();
        Self {
            config_hash: config_hash(cfg),
            variant: cfg.variant.to_string(),
            rounds: result.records.len() as u64,
            clients_per_round,
            param_count: cfg.model.param_count(),
            privacy: result.privacy,
            final_train: result.final_train,
            final_test: result.final_test,
            time_averaged_update_norm: (!norms.is_empty())
                .then(|| norms.iter().sum::<f64>() / norms.len() as f64),
            config: cfg.resolved(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_layout() {
        let r = RoundRecord {
            round: 4,
            sampled_clients: vec![1, 3],
            pre_clip_norms: vec![0.5, 0.25],
            clip_factors: vec![0.4, 0.8],
            mean_clip_factor: 0.6000000000000001,
            clip_deviation: 0.2,
            mean_local_loss: 1.5,
            epsilon: None,
            train: None,
            test: Some(Evaluation {
                accuracy: 0.75,
                mean_loss: 0.5,
            }),
        };
        let mut out = Vec::new();
        write_rounds_csv(&mut out, &[r]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ROUNDS_CSV_HEADER.join(","));
        assert_eq!(lines[1], "4,1;3,0.5;0.25,0.4;0.8,0.6000000000000001,0.2,0.375,1.5,,,,0.75,0.5");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn hash_tracks_config() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        b.master_seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        // An explicit default delta is the same run as an implicit one.
        b.master_seed = 0;
        b.dp.failure_prob = Some(1.0 / 50.0);
        assert_eq!(config_hash(&a), config_hash(&b));
    }
}
