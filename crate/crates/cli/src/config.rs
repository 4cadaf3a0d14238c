//! Run-config files: an `ExperimentConfig` plus `output_dir`, as JSON with
//! unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dpfl_core::ExperimentConfig;
use serde_json::{Map, Value};

use crate::UsageError;

pub const SEED_ENV: &str = "DPFL_SEED";
const DEFAULT_OUTPUT_DIR: &str = "dpfl-out";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// The echoed form: every default explicit, `output_dir` included.
    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self.experiment.resolved()).expect("config serializes");
        v.as_object_mut()
            .expect("config is an object")
            .insert("output_dir".into(), Value::String(self.output_dir.display().to_string()));
        v
    }
}

/// Parses `text`, applies `key=value` overrides in order, then the seed
/// environment variable.
pub fn parse(text: &str, overrides: &[String], seed_env: Option<String>) -> Result<RunConfig> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| UsageError(format!("config is not valid JSON: {e}")))?;
    if !doc.is_object() {
        return Err(UsageError("config must be a JSON object".into()).into());
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let obj = doc.as_object_mut().expect("checked above");
    let output_dir = match obj.remove("output_dir") {
        None => PathBuf::from(DEFAULT_OUTPUT_DIR),
        Some(Value::String(s)) => PathBuf::from(s),
        Some(other) => return Err(UsageError(format!("output_dir must be a string, got {other}")).into()),
    };
    let mut experiment: ExperimentConfig =
        serde_json::from_value(doc).map_err(|e| UsageError(format!("invalid config: {e}")))?;
    if let Some(s) = seed_env {
        experiment.master_seed = s
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
    }
    Ok(RunConfig {
        experiment,
        output_dir,
    })
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text, overrides, std::env::var(SEED_ENV).ok())
        .with_context(|| format!("loading {}", path.display()))
}

/// Sets a dotted path such as `dp.noise_multiplier=2`. The value is read as
/// JSON when it parses and as a plain string otherwise. Missing intermediate
/// objects are created; unknown keys are caught when the result is decoded.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| UsageError(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(UsageError(format!("override key {key:?} has an empty segment")).into());
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| UsageError(format!("cannot set {key:?}: `{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("loop returns on the last segment")
}
