//! Summary statistics and the paired one-sided comparison used by the
//! direction-of-effect checks.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Outcome of testing the claim `E[a] <= E[b]` on paired samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedComparison {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Mean of `a - b`.
    pub mean_diff: f64,
    pub std_error: f64,
    pub confidence: f64,
    /// One-sided Student-t critical value at `confidence`.
    pub critical: f64,
    /// Upper one-sided confidence bound on `E[a - b]`.
    pub upper_bound: f64,
    /// The data do not contradict the claim: `mean_diff <= critical * se`.
    pub consistent: bool,
    /// The data support the claim outright: `upper_bound <= 0`.
    pub significant: bool,
}

/// Paired one-sided t comparison of the claim `E[a] <= E[b]`.
pub fn compare_paired(a: &[f64], b: &[f64], confidence: f64) -> PairedComparison {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    assert!(a.len() >= 2, "need at least two pairs");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let mean_diff = mean(&diffs);
    let se = std_error(&diffs);
    let critical = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("dof >= 1")
        .inverse_cdf(confidence);
    let upper_bound = mean_diff + critical * se;
    PairedComparison {
        n,
        mean_a: mean(a),
        mean_b: mean(b),
        mean_diff,
        std_error: se,
        confidence,
        critical,
        upper_bound,
        consistent: mean_diff <= critical * se,
        significant: upper_bound <= 0.0,
    }
}
