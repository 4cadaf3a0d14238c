//! A small fully-connected softmax classifier over a flat parameter vector.
//!
//! Parameters are laid out layer by layer: the weight matrix of layer `l`
//! (row-major, `fan_out x fan_in`) followed by its bias vector. Hidden layers
//! apply the configured activation; the last layer emits raw logits and the
//! loss is the batch-mean softmax cross-entropy.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, tag};

/// Flat model parameters or a model update.
pub type ParamVector = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model spec needs at least 2 layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer size at position {0} must be >= 1")]
    EmptyLayer(usize),
    #[error("parameter length {got} does not match model dimension {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("batch feature width {got} does not match model input dimension {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch has {rows} feature rows but {labels} labels")]
    RaggedBatch { rows: usize, labels: usize },
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("evaluation dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Parameter ranges of one dense layer inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBlock {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            layer_sizes: vec![20, 32, 5],
            activation: Activation::Relu,
        }
    }
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self, ModelError> {
        let spec = Self {
            layer_sizes,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layer_sizes.len() < 2 {
            return Err(ModelError::TooFewLayers(self.layer_sizes.len()));
        }
        if let Some(pos) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(ModelError::EmptyLayer(pos));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// Parameter dimension `d`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layer_blocks(&self) -> Vec<LayerBlock> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = offset..offset + fan_in * fan_out;
                let bias = weights.end..weights.end + fan_out;
                offset = bias.end;
                LayerBlock {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                }
            })
            .collect()
    }

    fn check_params(&self, params: &[f64]) -> Result<(), ModelError> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(ModelError::ParamLength {
                expected,
                got: params.len(),
            });
        }
        Ok(())
    }
}

/// Labeled examples, features stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl Batch {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(ModelError::RaggedBatch {
                rows: features.len().checked_div(dim).unwrap_or(0),
                labels: labels.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            dim,
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    fn check_against(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        if self.dim != spec.input_dim() {
            return Err(ModelError::FeatureWidth {
                expected: spec.input_dim(),
                got: self.dim,
            });
        }
        let classes = spec.class_count();
        if let Some(&label) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(ModelError::LabelOutOfRange { label, classes });
        }
        Ok(())
    }
}

/// Scaled-uniform initialization: every weight and bias of a layer with
/// fan-in `n` is drawn from `U[-1/sqrt(n), 1/sqrt(n)]`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = rng::stream(seed, &[tag::INIT]);
    let mut params = vec![0.0; spec.param_count()];
    for block in spec.layer_blocks() {
        let bound = 1.0 / (block.fan_in as f64).sqrt();
        for p in &mut params[block.weights.start..block.bias.end] {
            *p = rng.random_range(-bound..=bound);
        }
    }
    params
}

/// Pre-activations and activations, layer by layer.
type Trace = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Per-example forward pass. Returns pre-activations and activations of
/// every layer; `acts[0]` is the input, the last entry of `pre` the logits.
fn forward(
    spec: &ModelSpec,
    blocks: &[LayerBlock],
    params: &[f64],
    x: &[f64],
) -> Result<Trace, ModelError> {
    let mut pre = Vec::with_capacity(blocks.len());
    let mut acts = Vec::with_capacity(blocks.len() + 1);
    acts.push(x.to_vec());
    let last = blocks.len() - 1;
    for (l, block) in blocks.iter().enumerate() {
        let w = &params[block.weights.clone()];
        let b = &params[block.bias.clone()];
        let input = &acts[l];
        let z: Vec<f64> = (0..block.fan_out)
            .map(|o| {
                let row = &w[o * block.fan_in..(o + 1) * block.fan_in];
                b[o] + row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>()
            })
            .collect();
        if !crate::vecops::all_finite(&z) {
            return Err(ModelError::NonFinite { layer: l });
        }
        let a = if l == last {
            z.clone()
        } else {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        };
        pre.push(z);
        acts.push(a);
    }
    Ok((pre, acts))
}

/// Cross-entropy of `logits` against `label`, plus softmax probabilities.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    // (max - z_y) + ln(sum) with sum >= 1 keeps the loss nonnegative.
    let loss = (max - logits[label]) + sum.ln();
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad(
    params: &[f64],
    batch: &Batch,
    spec: &ModelSpec,
) -> Result<(f64, ParamVector), ModelError> {
    spec.check_params(params)?;
    batch.check_against(spec)?;
    let blocks = spec.layer_blocks();
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    let inv_n = 1.0 / batch.len() as f64;

    for i in 0..batch.len() {
        let label = batch.labels[i];
        let (pre, acts) = forward(spec, &blocks, params, batch.row(i))?;
        let (loss, probs) = softmax_xent(pre.last().expect("at least one layer"), label);
        total += loss;

        let mut delta: Vec<f64> = probs;
        delta[label] -= 1.0;
        delta.iter_mut().for_each(|v| *v *= inv_n);

        for l in (0..blocks.len()).rev() {
            let block = &blocks[l];
            let input = &acts[l];
            for o in 0..block.fan_out {
                let d = delta[o];
                grad[block.bias.start + o] += d;
                let row = block.weights.start + o * block.fan_in;
                for (g, &xi) in grad[row..row + block.fan_in].iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let w = &params[block.weights.clone()];
                let mut upstream = vec![0.0; block.fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &w[o * block.fan_in..(o + 1) * block.fan_in];
                    for (u, &wi) in upstream.iter_mut().zip(row) {
                        *u += wi * d;
                    }
                }
                for (j, u) in upstream.iter_mut().enumerate() {
                    *u *= spec.activation.derivative(pre[l - 1][j], acts[l][j]);
                }
                delta = upstream;
            }
        }
    }

    let loss = total * inv_n;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite {
            layer: blocks.len() - 1,
        });
    }
    for (l, block) in blocks.iter().enumerate() {
        if !crate::vecops::all_finite(&grad[block.weights.start..block.bias.end]) {
            return Err(ModelError::NonFinite { layer: l });
        }
    }
    Ok((loss, grad))
}

/// Mean cross-entropy only.
pub fn loss(params: &[f64], batch: &Batch, spec: &ModelSpec) -> Result<f64, ModelError> {
    Ok(loss_sum_and_hits(params, batch, spec)?.0 / batch.len() as f64)
}

fn loss_sum_and_hits(
    params: &[f64],
    batch: &Batch,
    spec: &ModelSpec,
) -> Result<(f64, usize), ModelError> {
    spec.check_params(params)?;
    batch.check_against(spec)?;
    let blocks = spec.layer_blocks();
    let mut total = 0.0;
    let mut hits = 0;
    for i in 0..batch.len() {
        let (pre, _) = forward(spec, &blocks, params, batch.row(i))?;
        let logits = pre.last().expect("at least one layer");
        total += softmax_xent(logits, batch.labels[i]).0;
        if argmax_lowest(logits) == batch.labels[i] {
            hits += 1;
        }
    }
    Ok((total, hits))
}

/// Predicted class per example; ties go to the lowest class index.
pub fn predict(params: &[f64], batch: &Batch, spec: &ModelSpec) -> Result<Vec<usize>, ModelError> {
    spec.check_params(params)?;
    batch.check_against(spec)?;
    let blocks = spec.layer_blocks();
    (0..batch.len())
        .map(|i| {
            let (pre, _) = forward(spec, &blocks, params, batch.row(i))?;
            Ok(argmax_lowest(pre.last().expect("at least one layer")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Accuracy and mean loss pooled over every example of every batch.
pub fn evaluate(
    params: &[f64],
    dataset: &[Batch],
    spec: &ModelSpec,
) -> Result<Evaluation, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    let mut hits = 0;
    let mut count = 0;
    for batch in dataset {
        let (l, h) = loss_sum_and_hits(params, batch, spec)?;
        total += l;
        hits += h;
        count += batch.len();
    }
    Ok(Evaluation {
        accuracy: hits as f64 / count as f64,
        mean_loss: total / count as f64,
    })
}

/// A differentiable scalar function of a flat parameter vector.
///
/// The local optimizer, the SAM perturbation and the landscape diagnostics
/// are written against this trait so they can be exercised on analytic toy
/// surfaces as well as on the classifier.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn loss(&self, params: &[f64]) -> Result<f64, ModelError> {
        Ok(self.loss_and_grad(params)?.0)
    }

    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, ParamVector), ModelError>;

    /// Parameter groups used for per-layer direction normalization.
    fn blocks(&self) -> Vec<Range<usize>> {
        std::iter::once(0..self.dim()).collect()
    }
}

/// The classifier loss on a fixed batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchObjective<'a> {
    pub spec: &'a ModelSpec,
    pub batch: &'a Batch,
}

impl<'a> BatchObjective<'a> {
    pub fn new(spec: &'a ModelSpec, batch: &'a Batch) -> Self {
        Self { spec, batch }
    }
}

impl Objective for BatchObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, params: &[f64]) -> Result<f64, ModelError> {
        loss(params, self.batch, self.spec)
    }

    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, ParamVector), ModelError> {
        loss_and_grad(params, self.batch, self.spec)
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        layer_ranges(self.spec)
    }
}

fn layer_ranges(spec: &ModelSpec) -> Vec<Range<usize>> {
    spec.layer_blocks()
        .into_iter()
        .flat_map(|b| [b.weights, b.bias])
        .collect()
}

/// The classifier's mean loss pooled over every example of several batches.
/// `loss` is bit-identical to `evaluate(..).mean_loss`.
#[derive(Debug, Clone, Copy)]
pub struct EvalSetObjective<'a> {
    pub spec: &'a ModelSpec,
    pub batches: &'a [Batch],
}

impl Objective for EvalSetObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, params: &[f64]) -> Result<f64, ModelError> {
        Ok(evaluate(params, self.batches, self.spec)?.mean_loss)
    }

    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, ParamVector), ModelError> {
        if self.batches.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let total: usize = self.batches.iter().map(Batch::len).sum();
        let mut grad = vec![0.0; params.len()];
        let mut loss_sum = 0.0;
        for b in self.batches {
            let w = b.len() as f64 / total as f64;
            let (l, g) = loss_and_grad(params, b, self.spec)?;
            loss_sum += w * l;
            crate::vecops::axpy(w, &g, &mut grad);
        }
        Ok((loss_sum, grad))
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        layer_ranges(self.spec)
    }
}

/// `f(w) = 1/2 * sum_j c_j (w_j - m_j)^2`.
#[derive(Debug, Clone)]
pub struct QuadraticBowl {
    pub curvature: Vec<f64>,
    pub minimum: Vec<f64>,
}

impl QuadraticBowl {
    /// The isotropic bowl `1/2 ||w||^2`.
    pub fn isotropic(dim: usize) -> Self {
        Self {
            curvature: vec![1.0; dim],
            minimum: vec![0.0; dim],
        }
    }
}

impl Objective for QuadraticBowl {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, ParamVector), ModelError> {
        if params.len() != self.dim() {
            return Err(ModelError::ParamLength {
                expected: self.dim(),
                got: params.len(),
            });
        }
        let mut loss = 0.0;
        let grad = params
            .iter()
            .zip(&self.curvature)
            .zip(&self.minimum)
            .map(|((w, c), m)| {
                let r = w - m;
                loss += 0.5 * c * r * r;
                c * r
            })
            .collect();
        Ok((loss, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn spec(sizes: &[usize], act: Activation) -> ModelSpec {
        ModelSpec::new(sizes.to_vec(), act).unwrap()
    }

    fn random_batch(spec: &ModelSpec, n: usize, seed: u64) -> Batch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = spec.input_dim();
        let feats = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..spec.class_count())).collect();
        Batch::new(feats, labels, d).unwrap()
    }

    fn central_difference(spec: &ModelSpec, batch: &Batch, params: &[f64], h: f64) -> Vec<f64> {
        let mut p = params.to_vec();
        (0..p.len())
            .map(|j| {
                let orig = p[j];
                p[j] = orig + h;
                let plus = loss(&p, batch, spec).unwrap();
                p[j] = orig - h;
                let minus = loss(&p, batch, spec).unwrap();
                p[j] = orig;
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn parameter_counting() {
        assert_eq!(spec(&[2, 3, 2], Activation::Relu).param_count(), 17);
        assert_eq!(ModelSpec::default().param_count(), 837);
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(
            ModelSpec::new(vec![3], Activation::Relu),
            Err(ModelError::TooFewLayers(1))
        );
        assert_eq!(
            ModelSpec::new(vec![3, 0, 2], Activation::Relu),
            Err(ModelError::EmptyLayer(1))
        );
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let s = spec(&[2, 3, 2], Activation::Relu);
        assert_eq!(init_params(&s, 7), init_params(&s, 7));
        assert_ne!(init_params(&s, 7), init_params(&s, 8));
        let s = spec(&[4, 4], Activation::Relu);
        let p = init_params(&s, 1);
        assert_eq!(p.len(), 20);
        assert!(p.iter().all(|v| (-0.5..=0.5).contains(v)));
    }

    #[test]
    fn uniform_logits_give_log_class_count() {
        let s = spec(&[3, 4, 5], Activation::Tanh);
        let params = vec![0.0; s.param_count()];
        let b = Batch::new(vec![0.3, -1.0, 2.0], vec![4], 3).unwrap();
        let (l, _) = loss_and_grad(&params, &b, &s).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-15);

        let s2 = spec(&[3, 2], Activation::Relu);
        let params = vec![0.0; s2.param_count()];
        let b = Batch::new(vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0], vec![0, 1], 3).unwrap();
        let (l, _) = loss_and_grad(&params, &b, &s2).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_tanh() {
        let s = spec(&[4, 6, 5, 3], Activation::Tanh);
        for seed in 0..10 {
            let params = init_params(&s, seed);
            let batch = random_batch(&s, 7, seed + 100);
            let (_, g) = loss_and_grad(&params, &batch, &s).unwrap();
            let fd = central_difference(&s, &batch, &params, 1e-5);
            for (a, n) in g.iter().zip(&fd) {
                assert!((a - n).abs() <= 1e-6 * (1.0 + a.abs()), "{a} vs {n}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_relu() {
        // Random continuous inputs keep every pre-activation well away from
        // the kink at the 1e-5 probing scale with overwhelming probability.
        let s = spec(&[5, 8, 4], Activation::Relu);
        for seed in 0..10 {
            let params = init_params(&s, seed);
            let batch = random_batch(&s, 5, seed + 7);
            let (_, g) = loss_and_grad(&params, &batch, &s).unwrap();
            let fd = central_difference(&s, &batch, &params, 1e-5);
            for (a, n) in g.iter().zip(&fd) {
                assert!((a - n).abs() <= 1e-6 * (1.0 + a.abs()), "{a} vs {n}");
            }
        }
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let s = spec(&[3, 5, 3], Activation::Relu);
        let params = init_params(&s, 3);
        let b = random_batch(&s, 6, 11);
        let order = [4, 1, 5, 0, 3, 2];
        let feats: Vec<f64> = order.iter().flat_map(|&i| b.row(i).to_vec()).collect();
        let labels = order.iter().map(|&i| b.labels()[i]).collect();
        let permuted = Batch::new(feats, labels, 3).unwrap();
        let l1 = loss(&params, &b, &s).unwrap();
        let l2 = loss(&params, &permuted, &s).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
    }

    #[test]
    fn replay_is_bit_identical() {
        let s = spec(&[3, 5, 3], Activation::Tanh);
        let params = init_params(&s, 9);
        let b = random_batch(&s, 4, 9);
        assert_eq!(
            loss_and_grad(&params, &b, &s).unwrap(),
            loss_and_grad(&params, &b, &s).unwrap()
        );
    }

    #[test]
    fn overflow_names_the_layer() {
        let s = spec(&[2, 2, 2], Activation::Relu);
        let mut params = vec![0.0; s.param_count()];
        params[0] = f64::MAX;
        params[1] = f64::MAX;
        let b = Batch::new(vec![10.0, 10.0], vec![0], 2).unwrap();
        assert_eq!(
            loss_and_grad(&params, &b, &s),
            Err(ModelError::NonFinite { layer: 0 })
        );
    }

    #[test]
    fn evaluate_accuracy_edges() {
        let s = spec(&[2, 3], Activation::Relu);
        let params = init_params(&s, 5);
        let b = random_batch(&s, 9, 2);
        let preds = predict(&params, &b, &s).unwrap();
        let relabeled = Batch::new(b.features().to_vec(), preds, 2).unwrap();
        let e = evaluate(&params, &[relabeled], &s).unwrap();
        assert_eq!(e.accuracy, 1.0);

        let single = Batch::new(vec![0.5, 0.5], vec![1], 2).unwrap();
        let acc = evaluate(&params, &[single], &s).unwrap().accuracy;
        assert!(acc == 0.0 || acc == 1.0);

        assert_eq!(evaluate(&params, &[], &s), Err(ModelError::EmptyDataset));
    }

    #[test]
    fn ties_break_to_lowest_class() {
        let s = spec(&[2, 3], Activation::Relu);
        let params = vec![0.0; s.param_count()];
        let b = Batch::new(vec![1.0, 1.0], vec![0], 2).unwrap();
        assert_eq!(predict(&params, &b, &s).unwrap(), vec![0]);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let s = spec(&[2, 3], Activation::Relu);
        let b = Batch::new(vec![1.0, 1.0], vec![0], 2).unwrap();
        assert!(matches!(
            loss_and_grad(&[0.0; 3], &b, &s),
            Err(ModelError::ParamLength { .. })
        ));
        let bad = Batch::new(vec![1.0, 1.0], vec![5], 2).unwrap();
        assert!(matches!(
            loss_and_grad(&vec![0.0; s.param_count()], &bad, &s),
            Err(ModelError::LabelOutOfRange { .. })
        ));
        assert!(Batch::new(vec![1.0], vec![0, 1], 1).is_err());
        assert_eq!(Batch::new(vec![], vec![], 2), Err(ModelError::EmptyBatch));
    }
}
