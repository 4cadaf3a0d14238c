//! Rényi-DP accounting for the subsampled Gaussian mechanism.
//!
//! One round samples each client with rate `q` and releases the sum of
//! clipped updates plus Gaussian noise with multiplier `sigma`. Its RDP cost
//! at order `alpha` is
//!
//! ```text
//! eps(alpha) = 1/(alpha-1) * ln E_{z ~ N(0, sigma^2)} [ (1 - q + q * N(z; 1, sigma^2) / N(z; 0, sigma^2))^alpha ]
//! ```
//!
//! Integer orders use the exact binomial expansion of the expectation;
//! fractional orders integrate numerically in the log domain. Costs add
//! over rounds and convert to `(eps, delta)`-DP by minimizing over the order
//! grid.

mod quadrature;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use quadrature::{integrate, QuadResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountantError {
    #[error("non-private mechanism: noise multiplier is 0")]
    NonPrivate,
    #[error("invalid accountant parameter: {0}")]
    InvalidParam(String),
    #[error("empty Rényi order grid")]
    EmptyGrid,
    #[error(
        "quadrature did not converge at order {order}: log-estimate {log_estimate}, \
         relative error {rel_error:e} after {intervals} intervals"
    )]
    Quadrature {
        order: f64,
        log_estimate: f64,
        rel_error: f64,
        intervals: usize,
    },
}

/// Rényi orders considered when converting to `(eps, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpOrderGrid {
    orders: Vec<f64>,
}

impl Default for RdpOrderGrid {
    fn default() -> Self {
        let mut orders = vec![1.25, 1.5, 1.75];
        orders.extend((2..=64).map(f64::from));
        orders.extend([128.0, 256.0]);
        Self { orders }
    }
}

impl RdpOrderGrid {
    /// Orders must all exceed 1 and be strictly ascending.
    pub fn new(orders: Vec<f64>) -> Result<Self, AccountantError> {
        if let Some(bad) = orders.iter().find(|&&a| !(a > 1.0 && a.is_finite())) {
            return Err(AccountantError::InvalidParam(format!("order {bad} must be > 1")));
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AccountantError::InvalidParam("orders must be strictly ascending".into()));
        }
        Ok(Self { orders })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }
}

fn check_params(q: f64, sigma: f64, alpha: f64) -> Result<(), AccountantError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(AccountantError::InvalidParam(format!("q = {q} must be in (0, 1]")));
    }
    if sigma == 0.0 {
        return Err(AccountantError::NonPrivate);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(AccountantError::InvalidParam(format!("sigma = {sigma} must be > 0")));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(AccountantError::InvalidParam(format!("order {alpha} must be > 1")));
    }
    Ok(())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Largest integer order evaluated by the binomial expansion.
const MAX_BINOMIAL_ORDER: f64 = 100_000.0;

/// Cap on the initial quadrature partition, which uses pieces of width
/// about `sigma`. Smaller `sigma` at a fractional order is rejected.
const MAX_INITIAL_PIECES: f64 = 65_536.0;

/// Relative error accepted when refinement stops short of its 1e-13
/// target; it bounds the RDP error by `1e-10 / (alpha - 1)`.
const ACCEPTED_REL_ERROR: f64 = 1e-10;

/// Per-round RDP of the subsampled Gaussian mechanism at order `alpha`.
pub fn rdp_one_round(q: f64, sigma: f64, alpha: f64) -> Result<f64, AccountantError> {
    check_params(q, sigma, alpha)?;
    if alpha.fract() == 0.0 && alpha <= MAX_BINOMIAL_ORDER {
        rdp_binomial(q, sigma, alpha as u64)
    } else {
        rdp_quadrature(q, sigma, alpha)
    }
}

/// Exact RDP for integer `alpha` via
/// `E = sum_k C(alpha, k) (1-q)^(alpha-k) q^k exp(k (k-1) / (2 sigma^2))`.
pub fn rdp_binomial(q: f64, sigma: f64, alpha: u64) -> Result<f64, AccountantError> {
    check_params(q, sigma, alpha as f64)?;
    let log_q = q.ln();
    let log_1mq = (-q).ln_1p();
    let inv_2s2 = 1.0 / (2.0 * sigma * sigma);
    let a = alpha as f64;
    let mut log_binom = 0.0;
    let mut log_sum = f64::NEG_INFINITY;
    for k in 0..=alpha {
        let kf = k as f64;
        if k > 0 {
            log_binom += (a - kf + 1.0).ln() - kf.ln();
        }
        let rest = if k == alpha { 0.0 } else { (a - kf) * log_1mq };
        let term = log_binom + kf * log_q + rest + kf * (kf - 1.0) * inv_2s2;
        log_sum = log_add_exp(log_sum, term);
    }
    Ok((log_sum / (a - 1.0)).max(0.0))
}

/// RDP at any real `alpha > 1` by adaptive quadrature of the log-scaled
/// integrand over `[-20 sigma, alpha + 20 sigma + 1]`.
pub fn rdp_quadrature(q: f64, sigma: f64, alpha: f64) -> Result<f64, AccountantError> {
    check_params(q, sigma, alpha)?;
    let s2 = sigma * sigma;
    let log_q = q.ln();
    let log_1mq = (-q).ln_1p();
    let log_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_integrand = |z: f64| {
        let log_ratio = (2.0 * z - 1.0) / (2.0 * s2);
        let inner = log_add_exp(log_1mq, log_q + log_ratio);
        log_norm - z * z / (2.0 * s2) + alpha * inner
    };

    let lo = -20.0 * sigma;
    let hi = alpha + 20.0 * sigma + 1.0;
    if (hi - lo) / sigma > MAX_INITIAL_PIECES {
        return Err(AccountantError::InvalidParam(format!(
            "sigma = {sigma} is too small to integrate order {alpha}; need sigma >= {:.3e}",
            (alpha + 1.0) / (MAX_INITIAL_PIECES - 40.0)
        )));
    }
    // Scale by the largest sampled log-value so the integrand stays O(1).
    let scan = 4096;
    let peak = (0..=scan)
        .map(|i| lo + (hi - lo) * i as f64 / scan as f64)
        .chain([0.0, alpha])
        .map(log_integrand)
        .fold(f64::NEG_INFINITY, f64::max);

    let pieces = (((hi - lo) / sigma).ceil() as usize).max(16);
    let r = integrate(
        |z| (log_integrand(z) - peak).exp(),
        lo,
        hi,
        pieces,
        1e-13,
        pieces * 64,
    );
    let log_estimate = peak + r.value.ln();
    let rel_error = r.abs_error / r.value.abs();
    if !(r.converged || rel_error <= ACCEPTED_REL_ERROR) || !log_estimate.is_finite() {
        return Err(AccountantError::Quadrature {
            order: alpha,
            log_estimate,
            rel_error,
            intervals: r.intervals,
        });
    }
    Ok((log_estimate / (alpha - 1.0)).max(0.0))
}

/// `[(alpha-1) ln(1 - 1/alpha) - ln(alpha) - ln(delta)] / (alpha-1)`, the
/// amount added to the RDP value at order `alpha` to obtain `eps`.
pub fn conversion_term(alpha: f64, delta: f64) -> f64 {
    ((alpha - 1.0) * (1.0 - 1.0 / alpha).ln() - alpha.ln() - delta.ln()) / (alpha - 1.0)
}

/// RDP costs of one round over an order grid, plus the number of rounds
/// composed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    orders: Vec<f64>,
    per_round_rdp: Vec<f64>,
    rounds_elapsed: u64,
    q: f64,
    sigma: f64,
    delta: f64,
}

impl PrivacyLedger {
    /// Evaluates the per-round cost at every grid order; no rounds elapsed.
    pub fn new(grid: &RdpOrderGrid, q: f64, sigma: f64, delta: f64) -> Result<Self, AccountantError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AccountantError::InvalidParam(format!("delta = {delta} must be in (0, 1)")));
        }
        check_params(q, sigma, 2.0)?;
        let mut per_round_rdp = grid
            .orders()
            .par_iter()
            .map(|&a| rdp_one_round(q, sigma, a))
            .collect::<Result<Vec<_>, _>>()?;
        // Exact RDP is nondecreasing in the order; remove rounding wiggle.
        for i in 1..per_round_rdp.len() {
            per_round_rdp[i] = per_round_rdp[i].max(per_round_rdp[i - 1]);
        }
        Ok(Self {
            orders: grid.orders().to_vec(),
            per_round_rdp,
            rounds_elapsed: 0,
            q,
            sigma,
            delta,
        })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn per_round_rdp(&self) -> &[f64] {
        &self.per_round_rdp
    }

    pub fn rounds_elapsed(&self) -> u64 {
        self.rounds_elapsed
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Composes `rounds` more rounds.
    pub fn accumulate(&self, rounds: u64) -> Self {
        Self {
            rounds_elapsed: self.rounds_elapsed + rounds,
            ..self.clone()
        }
    }

    /// `T * eps_1(alpha)` per grid order.
    pub fn total_rdp(&self) -> Vec<f64> {
        let t = self.rounds_elapsed as f64;
        self.per_round_rdp.iter().map(|e| t * e).collect()
    }

    /// `(eps, best order)` at the ledger's own delta.
    pub fn epsilon(&self) -> Result<(f64, f64), AccountantError> {
        rdp_to_dp(self, self.delta)
    }

    /// `eps` after `rounds` rounds, independent of `rounds_elapsed`.
    pub fn epsilon_at(&self, rounds: u64) -> Result<f64, AccountantError> {
        Ok(rdp_to_dp(&Self { rounds_elapsed: rounds, ..self.clone() }, self.delta)?.0)
    }

    /// Smallest round count whose `eps` exceeds `target`, searching up to
    /// `max_rounds`.
    pub fn rounds_to_exceed(&self, target: f64, max_rounds: u64) -> Result<Option<u64>, AccountantError> {
        if self.epsilon_at(max_rounds)? <= target {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0u64, max_rounds);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.epsilon_at(mid)? > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }
}

/// Converts accumulated RDP to `(eps, delta)`-DP: the minimum over grid
/// orders of `T eps_1(alpha) + conversion_term(alpha, delta)`, floored at 0.
/// Returns `eps` and the minimizing order.
pub fn rdp_to_dp(ledger: &PrivacyLedger, delta: f64) -> Result<(f64, f64), AccountantError> {
    if ledger.orders.is_empty() {
        return Err(AccountantError::EmptyGrid);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountantError::InvalidParam(format!("delta = {delta} must be in (0, 1)")));
    }
    let (eps, order) = ledger
        .total_rdp()
        .iter()
        .zip(&ledger.orders)
        .map(|(&rdp, &a)| (rdp + conversion_term(a, delta), a))
        .fold((f64::INFINITY, f64::NAN), |best, cur| if cur.0 < best.0 { cur } else { best });
    Ok((eps.max(0.0), order))
}
