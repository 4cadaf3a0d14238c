//! Datasets, synthetic Gaussian-mixture generation, CSV ingestion and
//! Dirichlet label-skew partitioning into client shards.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Batch, ModelError};
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("csv header: {0}")]
    Header(String),
    #[error("cannot partition {examples} examples across {clients} clients")]
    TooManyClients { examples: usize, clients: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    class_count: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        class_count: usize,
    ) -> Result<Self, DataError> {
        if labels.is_empty() {
            return Err(DataError::InvalidParams("dataset is empty".into()));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(DataError::InvalidParams(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DataError::InvalidParams(format!(
                "label {l} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            dim,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Gathers the given rows (duplicates allowed) into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch, ModelError> {
        let mut feats = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            feats.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Batch::new(feats, labels, self.dim)
    }

    /// The dataset cut into consecutive batches of at most `size` rows.
    pub fn batches(&self, size: usize) -> Vec<Batch> {
        let idx: Vec<usize> = (0..self.len()).collect();
        idx.chunks(size.max(1))
            .map(|c| self.batch(c).expect("indices in range"))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let b = self.batch(indices).expect("indices in range");
        Dataset {
            features: b.features().to_vec(),
            labels: b.labels().to_vec(),
            dim: self.dim,
            class_count: self.class_count,
        }
    }

    /// Seeded shuffle, then the first `train_fraction` of rows go to train.
    pub fn train_test_split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
        let cut = ((self.len() as f64 * train_fraction).round() as usize).clamp(1, self.len() - 1);
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    pub fn label_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }
}

/// Balanced Gaussian mixture: class `c` is `N(separation * u_c, I)` with unit
/// centers `u_c`, orthonormal whenever `classes <= dims`.
pub fn synth_dataset(
    classes: usize,
    dims: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if classes < 2 {
        return Err(DataError::InvalidParams("need at least 2 classes".into()));
    }
    if n < classes {
        return Err(DataError::InvalidParams(format!(
            "n = {n} must be at least the class count {classes}"
        )));
    }
    if dims == 0 {
        return Err(DataError::InvalidParams("dims must be >= 1".into()));
    }
    let mut rng = rng::stream(seed, &[tag::DATA]);

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while centers.len() < classes {
        let mut v: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        if classes <= dims {
            for c in &centers {
                let proj = crate::vecops::dot(&v, c);
                crate::vecops::axpy(-proj, c, &mut v);
            }
        }
        let norm = crate::vecops::norm2(&v);
        if norm > 1e-8 {
            crate::vecops::scale(1.0 / norm, &mut v);
            centers.push(v);
        }
    }

    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * dims);
    for &label in &labels {
        for &c in &centers[label] {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(separation * c + noise);
        }
    }
    Dataset::new(features, labels, dims, classes)
}

/// Label heterogeneity across clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum Heterogeneity {
    Iid,
    Dirichlet(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Alpha(f64),
    Keyword(String),
}

impl TryFrom<AlphaRepr> for Heterogeneity {
    type Error = String;

    fn try_from(r: AlphaRepr) -> Result<Self, String> {
        match r {
            AlphaRepr::Alpha(a) if a > 0.0 && a.is_finite() => Ok(Heterogeneity::Dirichlet(a)),
            AlphaRepr::Alpha(a) => Err(format!("dirichlet_alpha must be > 0, got {a}")),
            AlphaRepr::Keyword(k) if k == "iid" => Ok(Heterogeneity::Iid),
            AlphaRepr::Keyword(k) => Err(format!("dirichlet_alpha must be a number or \"iid\", got {k:?}")),
        }
    }
}

impl From<Heterogeneity> for AlphaRepr {
    fn from(h: Heterogeneity) -> Self {
        match h {
            Heterogeneity::Iid => AlphaRepr::Keyword("iid".into()),
            Heterogeneity::Dirichlet(a) => AlphaRepr::Alpha(a),
        }
    }
}

impl std::str::FromStr for Heterogeneity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "iid" {
            return Ok(Heterogeneity::Iid);
        }
        let a: f64 = s.parse().map_err(|_| format!("expected a number or \"iid\", got {s:?}"))?;
        AlphaRepr::Alpha(a).try_into()
    }
}

impl fmt::Display for Heterogeneity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Heterogeneity::Iid => write!(f, "iid"),
            Heterogeneity::Dirichlet(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub num_clients: usize,
    pub dirichlet_alpha: Heterogeneity,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            num_clients: 50,
            dirichlet_alpha: Heterogeneity::Dirichlet(0.6),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub indices: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Splits `total` items by `shares` (nonnegative, not all zero) with the
/// largest-remainder rule. Remainder ties go to the earliest position after
/// `rotate` so equal shares do not always favour client 0.
fn apportion(total: usize, shares: &[f64], rotate: usize) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let n = shares.len();
    let quotas: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
            .then(((a + n - rotate % n) % n).cmp(&((b + n - rotate % n) % n)))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-client label proportions drawn from `Dir(alpha)` (uniform for iid);
/// each class's examples are then dealt to clients by largest-remainder
/// apportionment against the clients' weights for that class.
pub fn dirichlet_partition(
    ds: &Dataset,
    cfg: &PartitionConfig,
) -> Result<Vec<ClientShard>, DataError> {
    let m = cfg.num_clients;
    if m == 0 || m > ds.len() {
        return Err(DataError::TooManyClients {
            examples: ds.len(),
            clients: m,
        });
    }
    let k = ds.class_count();
    let mut rng = rng::stream(cfg.seed, &[tag::DATA, 1]);

    let proportions: Vec<Vec<f64>> = match cfg.dirichlet_alpha {
        Heterogeneity::Iid => vec![vec![1.0 / k as f64; k]; m],
        Heterogeneity::Dirichlet(alpha) => {
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|e| DataError::InvalidParams(format!("dirichlet_alpha: {e}")))?;
            (0..m)
                .map(|_| {
                    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                    let s: f64 = draws.iter().sum();
                    if s > 0.0 && s.is_finite() {
                        draws.iter().map(|g| g / s).collect()
                    } else {
                        vec![1.0 / k as f64; k]
                    }
                })
                .collect()
        }
    };

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    let mut shards: Vec<ClientShard> = (0..m)
        .map(|client_id| ClientShard {
            client_id,
            indices: Vec::new(),
        })
        .collect();
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let mut shares: Vec<f64> = proportions.iter().map(|p| p[c]).collect();
        if shares.iter().sum::<f64>() <= 0.0 {
            shares = vec![1.0; m];
        }
        let counts = apportion(members.len(), &shares, c);
        let mut offset = 0;
        for (shard, count) in shards.iter_mut().zip(counts) {
            shard.indices.extend_from_slice(&members[offset..offset + count]);
            offset += count;
        }
    }

    // Repair: each empty shard takes one example from the current largest.
    for i in 0..m {
        if shards[i].indices.is_empty() {
            let donor = (0..m)
                .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
                .expect("m >= 1");
            let moved = shards[donor].indices.pop().expect("donor has >= 2 examples");
            shards[i].indices.push(moved);
        }
    }
    for s in &mut shards {
        s.indices.sort_unstable();
    }
    Ok(shards)
}

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub feature_count: usize,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Known label values in class-index order. When absent, distinct values
    /// found in the file are sorted (numerically if all are integers) and
    /// numbered from 0.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

fn default_label_column() -> String {
    "label".into()
}

impl CsvSchema {
    pub fn new(feature_count: usize) -> Self {
        Self {
            feature_count,
            label_column: default_label_column(),
            labels: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    read_csv(std::fs::File::open(path)?, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == schema.label_column)
        .ok_or_else(|| DataError::Header(format!("no column named {:?}", schema.label_column)))?;
    let width = headers.len();
    if width - 1 != schema.feature_count {
        return Err(DataError::Header(format!(
            "expected {} feature columns, found {}",
            schema.feature_count,
            width - 1
        )));
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record?;
        if record.len() != width {
            return Err(DataError::Malformed {
                line,
                msg: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if j == label_col {
                raw_labels.push((line, field.trim().to_string()));
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| DataError::Malformed {
                line,
                msg: format!("non-numeric feature {:?} in column {}", field, headers[j].trim()),
            })?;
            if !v.is_finite() {
                return Err(DataError::Malformed {
                    line,
                    msg: format!("non-finite feature in column {}", headers[j].trim()),
                });
            }
            features.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(DataError::InvalidParams("csv has no data rows".into()));
    }

    let vocabulary: Vec<String> = match &schema.labels {
        Some(known) => known.clone(),
        None => {
            let mut distinct: Vec<String> = raw_labels.iter().map(|(_, l)| l.clone()).collect();
            distinct.sort();
            distinct.dedup();
            if distinct.iter().all(|l| l.parse::<i64>().is_ok()) {
                distinct.sort_by_key(|l| l.parse::<i64>().expect("checked"));
            }
            distinct
        }
    };
    let index: BTreeMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let labels = raw_labels
        .iter()
        .map(|(line, l)| {
            index.get(l.as_str()).copied().ok_or_else(|| DataError::UnknownLabel {
                line: *line,
                label: l.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(features, labels, schema.feature_count, vocabulary.len().max(1))
}

/// Writes `f0,...,f{D-1},label` rows. Features use 17 significant digits in
/// scientific notation, which round-trips every finite `f64` exactly.
pub fn write_csv<W: Write>(writer: W, ds: &Dataset) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        rec.push(ds.labels()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<(), DataError> {
    write_csv(std::io::BufWriter::new(std::fs::File::create(path)?), ds)
}
