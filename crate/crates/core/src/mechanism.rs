//! The privacy-relevant transformations applied to every local update before
//! it leaves the client: clip to norm `C`, add `N(0, sigma^2 C^2 / m)` noise
//! per coordinate, then optionally sparsify. The order is fixed.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ParamVector;
use crate::vecops;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("k = {k} is outside [1, {d}]")]
    KOutOfRange { k: usize, d: usize },
    #[error("invalid dp config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    /// `C`
    pub clip_threshold: f64,
    /// `sigma`
    pub noise_multiplier: f64,
    /// `q`
    pub client_sample_ratio: f64,
    /// `delta`; `None` resolves to `1/M`.
    pub failure_prob: Option<f64>,
    /// `p = k / d`
    pub sparsity_ratio: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            clip_threshold: 0.2,
            noise_multiplier: 0.95,
            client_sample_ratio: 0.1,
            failure_prob: None,
            sparsity_ratio: 0.4,
        }
    }
}

impl DpConfig {
    /// Checks the config against a population of `num_clients` and a model
    /// of dimension `dim`.
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, num_clients: usize, dim: usize) -> Result<(), MechanismError> {
        let bad = |m: String| Err(MechanismError::InvalidConfig(m));
        if !(self.clip_threshold > 0.0) {
            return bad("clip_threshold must be > 0".into());
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return bad("noise_multiplier must be finite and >= 0".into());
        }
        let q = self.client_sample_ratio;
        if !(q > 0.0 && q <= 1.0) {
            return bad("client_sample_ratio must be in (0, 1]".into());
        }
        if let Some(d) = self.failure_prob {
            if !(d > 0.0 && d < 1.0) {
                return bad("failure_prob must be in (0, 1)".into());
            }
        }
        let p = self.sparsity_ratio;
        if !(p > 0.0 && p <= 1.0) {
            return bad("sparsity_ratio must be in (0, 1]".into());
        }
        if p * dim as f64 + 1e-9 < 1.0 {
            return bad(format!("sparsity_ratio {p} keeps no coordinate of a {dim}-dim update"));
        }
        if sampled_count(num_clients, q) == 0 {
            return bad("no client would be sampled".into());
        }
        Ok(())
    }

    /// `delta`, defaulting to `1/M`.
    pub fn resolved_delta(&self, num_clients: usize) -> f64 {
        self.failure_prob.unwrap_or(1.0 / num_clients as f64)
    }
}

/// `m = round(q * M)`, at least 1 and at most `M` (0 only when `M = 0`).
pub fn sampled_count(num_clients: usize, q: f64) -> usize {
    ((q * num_clients as f64).round() as usize).clamp(1.min(num_clients), num_clients)
}

/// Number of coordinates kept for sparsity ratio `p`: `round(p * d)`, at least 1.
pub fn kept_coordinates(p: f64, d: usize) -> usize {
    ((p * d as f64).round() as usize).clamp(1, d.max(1))
}

/// `min(1, C / ||delta||)`, and 1 for the zero vector.
pub fn clip_factor(delta: &[f64], clip: f64) -> f64 {
    let norm = vecops::norm2(delta);
    if norm == 0.0 {
        1.0
    } else {
        (clip / norm).min(1.0)
    }
}

pub fn clip_update(delta: &[f64], clip: f64) -> ParamVector {
    let f = clip_factor(delta, clip);
    delta.iter().map(|v| v * f).collect()
}

/// Adds i.i.d. `N(0, sigma^2 C^2 / m)` to every coordinate.
pub fn add_noise<R: Rng + ?Sized>(
    delta: &[f64],
    clip: f64,
    sigma: f64,
    m: usize,
    rng: &mut R,
) -> ParamVector {
    if sigma == 0.0 {
        return delta.to_vec();
    }
    let std = sigma * clip / (m as f64).sqrt();
    delta
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v + std * z
        })
        .collect()
}

/// Keeps the `k` largest-magnitude coordinates; among equal magnitudes the
/// lower index wins. Returns the masked vector and the mask.
pub fn topk_sparsify(delta: &[f64], k: usize) -> Result<(ParamVector, Vec<bool>), MechanismError> {
    let d = delta.len();
    if k == 0 || k > d {
        return Err(MechanismError::KOutOfRange { k, d });
    }
    let mut mask = vec![false; d];
    if k == d {
        mask.fill(true);
        return Ok((delta.to_vec(), mask));
    }
    let mut order: Vec<usize> = (0..d).collect();
    // Strict total order: magnitude descending, then index ascending.
    order.select_nth_unstable_by(k - 1, |&a, &b| {
        delta[b].abs().total_cmp(&delta[a].abs()).then(a.cmp(&b))
    });
    for &i in &order[..k] {
        mask[i] = true;
    }
    Ok((apply_mask(delta, &mask), mask))
}

/// Keeps `k` coordinates chosen uniformly without replacement.
pub fn randk_sparsify<R: Rng + ?Sized>(
    delta: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<(ParamVector, Vec<bool>), MechanismError> {
    let d = delta.len();
    if k == 0 || k > d {
        return Err(MechanismError::KOutOfRange { k, d });
    }
    let mut mask = vec![false; d];
    for i in index::sample(rng, d, k) {
        mask[i] = true;
    }
    Ok((apply_mask(delta, &mask), mask))
}

pub fn apply_mask(delta: &[f64], mask: &[bool]) -> ParamVector {
    delta
        .iter()
        .zip(mask)
        .map(|(&v, &keep)| if keep { v } else { 0.0 })
        .collect()
}

/// `(1/m) * sum(updates)`, summed in slice order.
pub fn aggregate(updates: &[ParamVector], m: usize, dim: usize) -> ParamVector {
    let mut sum = vec![0.0; dim];
    for u in updates {
        vecops::axpy(1.0, u, &mut sum);
    }
    vecops::scale(1.0 / m as f64, &mut sum);
    sum
}
