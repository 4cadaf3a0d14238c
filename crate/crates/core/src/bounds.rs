//! Closed-form sensitivity, per-round privacy and generalization bounds,
//! and an empirical probe of local-update sensitivity.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClientShard, Dataset};
use crate::model::{init_params, ModelSpec, Objective, ParamVector};
use crate::optimizer::{run_local_round, OptimizerConfig, OptimizerError, OptimizerKind};
use crate::rng::{self, derive_seed};
use crate::vecops;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("step size too large for bound validity: 1 - {factor}*eta^2*L^2*K = {denominator} <= 0")]
    StepTooLarge { factor: f64, denominator: f64 },
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

fn require(cond: bool, msg: impl Into<String>) -> Result<(), BoundsError> {
    if cond {
        Ok(())
    } else {
        Err(BoundsError::OutOfDomain(msg.into()))
    }
}

/// Problem constants: smoothness `L`, local gradient variance bound
/// `sigma_l` and gradient norm bound `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    pub lipschitz: f64,
    pub local_variance: f64,
    pub grad_bound: f64,
}

/// Expected squared sensitivity bound of a SAM local update:
/// `6 eta^2 rho^2 K L^2 (12 K^2 L^2 eta^2 + 10) / (1 - 2 eta^2 L^2 K)`.
pub fn sensitivity_bound_sam(eta: f64, rho: f64, k: u64, l: f64) -> Result<f64, BoundsError> {
    require(eta >= 0.0 && rho >= 0.0 && l > 0.0 && k >= 1, "need eta, rho >= 0, L > 0, K >= 1")?;
    let k = k as f64;
    let denominator = 1.0 - 2.0 * eta * eta * l * l * k;
    if denominator <= 0.0 {
        return Err(BoundsError::StepTooLarge {
            factor: 2.0,
            denominator,
        });
    }
    Ok(6.0 * eta * eta * rho * rho * k * l * l * (12.0 * k * k * l * l * eta * eta + 10.0) / denominator)
}

/// Expected squared sensitivity bound of an SGD local update:
/// `6 eta^2 sigma_l^2 K / (1 - 3 eta^2 K L^2)`.
pub fn sensitivity_bound_sgd(eta: f64, sigma_l: f64, k: u64, l: f64) -> Result<f64, BoundsError> {
    require(eta >= 0.0 && sigma_l >= 0.0 && l > 0.0 && k >= 1, "need eta, sigma_l >= 0, L > 0, K >= 1")?;
    let k = k as f64;
    let denominator = 1.0 - 3.0 * eta * eta * k * l * l;
    if denominator <= 0.0 {
        return Err(BoundsError::StepTooLarge {
            factor: 3.0,
            denominator,
        });
    }
    Ok(6.0 * eta * eta * sigma_l * sigma_l * k / denominator)
}

/// Both sensitivity bounds at `eta = 1/(L sqrt(K T))` and `rho = 1/sqrt(T)`.
/// Returns `(sam, sgd)`.
pub fn scaled_sensitivity_bounds(
    rounds: u64,
    k: u64,
    l: f64,
    sigma_l: f64,
) -> Result<(f64, f64), BoundsError> {
    require(rounds >= 1, "T must be >= 1")?;
    let t = rounds as f64;
    let eta = 1.0 / (l * (k as f64 * t).sqrt());
    let rho = 1.0 / t.sqrt();
    Ok((
        sensitivity_bound_sam(eta, rho, k, l)?,
        sensitivity_bound_sgd(eta, sigma_l, k, l)?,
    ))
}

/// Smallest `T` in `candidates` from which the SAM bound stays below the
/// SGD bound for every later candidate; `None` if it never does.
pub fn sam_tighter_from(
    candidates: &[u64],
    k: u64,
    l: f64,
    sigma_l: f64,
) -> Result<Option<u64>, BoundsError> {
    let mut from = None;
    for &t in candidates {
        let (sam, sgd) = scaled_sensitivity_bounds(t, k, l, sigma_l)?;
        if sam < sgd {
            from.get_or_insert(t);
        } else {
            from = None;
        }
    }
    Ok(from)
}

/// Inputs of the per-round max-divergence privacy bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenBoundInputs {
    /// Total training sample size `N`.
    pub total_samples: u64,
    /// Participating clients per round `m`.
    pub participants: u64,
    pub rho: f64,
    pub sigma: f64,
    pub clip: f64,
    pub dim: u64,
    pub rounds: u64,
    pub delta_tilde: f64,
}

impl GenBoundInputs {
    fn validate(&self) -> Result<(), BoundsError> {
        require(self.total_samples >= 1 && self.participants >= 1, "N and m must be >= 1")?;
        require(self.participants <= self.total_samples, "m must not exceed N")?;
        require(self.rho >= 0.0 && self.rho.is_finite(), "rho must be >= 0")?;
        require(self.sigma > 0.0 && self.clip > 0.0, "sigma and C must be > 0")?;
        require(self.dim >= 1 && self.rounds >= 1, "d and T must be >= 1")?;
        require(
            self.delta_tilde > 0.0 && self.delta_tilde <= 1.0,
            "delta_tilde must be in (0, 1]",
        )
    }

    fn log_inv_delta_tilde(&self) -> f64 {
        -self.delta_tilde.ln()
    }
}

/// `eps~ = log((N-m)/N + (m/N) exp(L rho sqrt(2 log(1/dt)) / (sigma C d) + (sqrt2 L rho / (sigma C d))^2))`.
pub fn gen_epsilon_tilde(inp: &GenBoundInputs, l: f64) -> Result<f64, BoundsError> {
    inp.validate()?;
    require(l > 0.0, "L must be > 0")?;
    let scale = inp.sigma * inp.clip * inp.dim as f64;
    let a = l * inp.rho * (2.0 * inp.log_inv_delta_tilde()).sqrt() / scale;
    let b = (2f64.sqrt() * l * inp.rho / scale).powi(2);
    let frac = inp.participants as f64 / inp.total_samples as f64;
    // log(1 + frac * (e^x - 1)), stable for tiny x.
    Ok((frac * (a + b).exp_m1()).ln_1p())
}

/// The per-round `delta` of the max-divergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundDelta {
    /// Chernoff bound at the unconstrained optimal exponent; equals `delta_tilde`.
    pub analytic: f64,
    /// The same bound minimized over integer exponents `1..=T`, capped at 1.
    pub constrained: f64,
    /// Minimizing integer exponent.
    pub best_t: u64,
    /// `(m/N) * analytic`, the delta the round is private with.
    pub round_delta: f64,
}

/// Evaluates `min_t exp(-sqrt2 t s sqrt(log 1/dt)) E[exp(t <v, W'>)]` with
/// `<v, W'> ~ N(0, s^2)`, `s = ||v|| sigma C d / m` and `||v|| = 2 L rho / m`.
pub fn gen_round_delta(inp: &GenBoundInputs, l: f64) -> Result<RoundDelta, BoundsError> {
    inp.validate()?;
    require(l > 0.0, "L must be > 0")?;
    let m = inp.participants as f64;
    let v_norm = 2.0 * l * inp.rho / m;
    let s = v_norm * inp.sigma * inp.clip * inp.dim as f64 / m;
    let log_inv = inp.log_inv_delta_tilde();
    let exponent = |t: f64| -(2f64.sqrt()) * t * s * log_inv.sqrt() + 0.5 * t * t * s * s;

    let analytic = if s == 0.0 { 1.0 } else { (-log_inv).exp() };
    let (best_t, best) = if s == 0.0 {
        (1, 0.0)
    } else {
        let t_star = 2f64.sqrt() * log_inv.sqrt() / s;
        let lo = (t_star.floor().max(1.0) as u64).min(inp.rounds);
        let hi = (t_star.ceil().max(1.0) as u64).min(inp.rounds);
        [lo, hi]
            .into_iter()
            .map(|t| (t, exponent(t as f64)))
            .fold((lo, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
    };
    Ok(RoundDelta {
        analytic,
        constrained: best.exp().min(1.0),
        best_t,
        round_delta: analytic * inp.participants as f64 / inp.total_samples as f64,
    })
}

/// Composition over `T` rounds of an `(eps~, round_delta)` per-round guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub epsilon: f64,
    /// `None` where the closed form is undefined (`eps~ = 0` or `T eps~ <= eps'`).
    pub delta: Option<f64>,
}

/// `eps' = sqrt(2 T log(1/dt) eps~^2) + T eps~ (e^eps~ - 1)/(e^eps~ + 1)` and
/// the matching `delta'`, evaluated term by term with log-domain products.
pub fn gen_composition(
    eps_tilde: f64,
    round_delta: f64,
    rounds: u64,
    delta_tilde: f64,
) -> Result<Composition, BoundsError> {
    require(rounds >= 1, "T must be >= 1")?;
    require(eps_tilde >= 0.0 && eps_tilde.is_finite(), "eps_tilde must be finite and >= 0")?;
    require((0.0..=1.0).contains(&round_delta), "round delta must be in [0, 1]")?;
    require(delta_tilde > 0.0 && delta_tilde <= 1.0, "delta_tilde must be in (0, 1]")?;
    let t = rounds as f64;
    let e = eps_tilde;
    let eps = (2.0 * t * (-delta_tilde.ln()) * e * e).sqrt() + t * e * (e / 2.0).tanh();

    let te = t * e;
    if e == 0.0 || te <= eps {
        return Ok(Composition {
            epsilon: eps,
            delta: None,
        });
    }
    let log_1pe = e.exp().ln_1p();
    let log_first = -(eps + te) / 2.0
        + t * (-log_1pe + (2.0 * te).ln() - (te - eps).ln())
        - (eps + te) / (2.0 * e) * ((te + eps).ln() - (te - eps).ln());
    let x = round_delta / (1.0 + e.exp());
    let steps = (eps / e).ceil();
    let middle = (steps * (-(e.exp() * x)).ln_1p() + (t - steps) * (-x).ln_1p()).exp();
    let last = (t * (-x).ln_1p()).exp();
    Ok(Composition {
        epsilon: eps,
        delta: Some(log_first.exp() + 2.0 - middle - last),
    })
}

/// Generalization gap `4 eps'` and the probability it holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub gap: f64,
    pub confidence: f64,
    /// `eps' >= 2`: the logarithm is non-positive and confidence was set to 1.
    pub clamped: bool,
}

/// `P[|R_S - R_D| < 4 eps'] > 1 - (2 e^{-1.7 eps'} delta' / eps') ln(2/eps')`.
pub fn generalization_gap_bound(eps: f64, delta: f64) -> Result<GapBound, BoundsError> {
    require(eps > 0.0 && eps.is_finite(), "eps' must be > 0")?;
    require(delta >= 0.0, "delta' must be >= 0")?;
    if eps >= 2.0 {
        log::warn!("eps' = {eps} >= 2 makes ln(2/eps') <= 0; confidence clamped to 1");
        return Ok(GapBound {
            gap: 4.0 * eps,
            confidence: 1.0,
            clamped: true,
        });
    }
    let loss = 2.0 * (-1.7 * eps).exp() * delta / eps * (2.0 / eps).ln();
    Ok(GapBound {
        gap: 4.0 * eps,
        confidence: (1.0 - loss).clamp(0.0, 1.0),
        clamped: false,
    })
}

/// Minimum sample size `(2/eps'^2) ln(16 / (e^{-eps'} delta'))` under which
/// the generalization bound is stated.
pub fn required_sample_size(eps: f64, delta: f64) -> Result<f64, BoundsError> {
    require(eps > 0.0 && delta > 0.0, "eps' and delta' must be > 0")?;
    Ok(2.0 / (eps * eps) * (16.0f64.ln() + eps - delta.ln()))
}

/// Heuristic smoothness estimate: the largest observed
/// `||grad(w) - grad(w')|| / ||w - w'||` over random pairs within `radius`
/// of `center`.
pub fn estimate_lipschitz<R: Rng + ?Sized>(
    objective: &dyn Objective,
    center: &[f64],
    probes: usize,
    radius: f64,
    rng: &mut R,
) -> Result<f64, BoundsError> {
    let mut best: f64 = 0.0;
    let jitter = |rng: &mut R| -> Vec<f64> {
        center
            .iter()
            .map(|c| c + radius * rng.random_range(-1.0..1.0))
            .collect()
    };
    for _ in 0..probes {
        let a = jitter(rng);
        let b = jitter(rng);
        let ga = objective.loss_and_grad(&a).map_err(OptimizerError::from)?.1;
        let gb = objective.loss_and_grad(&b).map_err(OptimizerError::from)?.1;
        let dist = vecops::norm2(&vecops::sub(&a, &b));
        if dist > 0.0 {
            best = best.max(vecops::norm2(&vecops::sub(&ga, &gb)) / dist);
        }
    }
    Ok(best)
}

/// Heuristic local variance bound: `sqrt(mean ||g_B - g||^2)` over `draws`
/// minibatches `B` of `batch_size` drawn with replacement from `shard`, where
/// `g` is the full-shard gradient at `params`.
pub fn estimate_gradient_std<R: Rng + ?Sized>(
    params: &[f64],
    shard: &ClientShard,
    dataset: &Dataset,
    spec: &ModelSpec,
    batch_size: usize,
    draws: usize,
    rng: &mut R,
) -> Result<f64, BoundsError> {
    require(!shard.is_empty() && batch_size >= 1 && draws >= 1, "need a nonempty shard, batch_size >= 1, draws >= 1")?;
    let grad = |idx: &[usize]| -> Result<ParamVector, BoundsError> {
        let b = dataset.batch(idx).map_err(OptimizerError::from)?;
        Ok(crate::model::loss_and_grad(params, &b, spec).map_err(OptimizerError::from)?.1)
    };
    let full = grad(&shard.indices)?;
    let mut acc = 0.0;
    for _ in 0..draws {
        let idx: Vec<usize> = (0..batch_size)
            .map(|_| shard.indices[rng.random_range(0..shard.len())])
            .collect();
        acc += vecops::norm2_sq(&vecops::sub(&grad(&idx)?, &full));
    }
    Ok((acc / draws as f64).sqrt())
}

/// Setup for probing how much one changed example moves a local update.
#[derive(Debug, Clone)]
pub struct SensitivityTask {
    pub dataset: Dataset,
    pub spec: ModelSpec,
    /// Examples per client shard.
    pub shard_size: usize,
    /// Starting model shared by both shards of a pair; `None` draws a fresh
    /// initialization per trial.
    pub start: Option<ParamVector>,
    /// Positions replaced in the adjacent shard: 1 for adjacent datasets,
    /// 0 for identical pairs.
    pub differing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub mean_sq_sam: f64,
    pub mean_sq_sgd: f64,
    /// `(||dx - dy||^2 under SAM, same under SGD)` per trial.
    pub per_trial: Vec<(f64, f64)>,
}

/// Squared distance between the updates of two shards under SAM and SGD,
/// with every run driven by the same batch-sampling seed.
pub fn update_sq_difference(
    start: &[f64],
    x: &ClientShard,
    y: &ClientShard,
    dataset: &Dataset,
    cfg: &OptimizerConfig,
    spec: &ModelSpec,
    seed: u64,
) -> Result<(f64, f64), BoundsError> {
    let run = |shard: &ClientShard, kind| {
        let c = OptimizerConfig { kind, ..cfg.clone() };
        run_local_round(start, shard, dataset, &c, spec, seed).map(|o| o.delta)
    };
    let sam = vecops::norm2_sq(&vecops::sub(&run(x, OptimizerKind::Sam)?, &run(y, OptimizerKind::Sam)?));
    let sgd = vecops::norm2_sq(&vecops::sub(&run(x, OptimizerKind::Sgd)?, &run(y, OptimizerKind::Sgd)?));
    Ok((sam, sgd))
}

/// Builds `trials` adjacent shard pairs and measures the mean squared update
/// difference under SAM and SGD. Trials run in parallel; results are ordered
/// by trial index.
pub fn empirical_sensitivity(
    task: &SensitivityTask,
    cfg: &OptimizerConfig,
    trials: usize,
    seed: u64,
) -> Result<SensitivityReport, BoundsError> {
    require(trials >= 1, "trials must be >= 1")?;
    let n = task.dataset.len();
    require(
        task.shard_size >= 1 && task.shard_size + task.differing <= n,
        "shard_size plus replacements must fit in the dataset",
    )?;
    require(task.differing <= task.shard_size, "cannot replace more examples than the shard holds")?;

    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial = trial as u64;
            let mut rng = rng::stream(seed, &[0x5345_4e53, trial]);
            let picked = index::sample(&mut rng, n, task.shard_size + task.differing).into_vec();
            let (base, extra) = picked.split_at(task.shard_size);
            let x = ClientShard {
                client_id: 0,
                indices: base.to_vec(),
            };
            let mut y = x.clone();
            for (slot, &replacement) in extra.iter().enumerate() {
                let pos = (slot * 7919 + rng.random_range(0..task.shard_size)) % task.shard_size;
                y.indices[pos] = replacement;
            }
            let start = match &task.start {
                Some(w) => w.clone(),
                None => init_params(&task.spec, derive_seed(seed, &[trial])),
            };
            let run_seed = derive_seed(seed, &[0x52_554e, trial]);
            update_sq_difference(&start, &x, &y, &task.dataset, cfg, &task.spec, run_seed)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let t = per_trial.len() as f64;
    Ok(SensitivityReport {
        mean_sq_sam: per_trial.iter().map(|p| p.0).sum::<f64>() / t,
        mean_sq_sgd: per_trial.iter().map(|p| p.1).sum::<f64>() / t,
        per_trial,
    })
}
