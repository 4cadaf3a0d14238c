use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use dpfl_core::accountant::{PrivacyLedger, RdpOrderGrid};
use dpfl_core::bounds::{self, GenBoundInputs, SensitivityTask};
use dpfl_core::checkpoint;
use dpfl_core::data::{dirichlet_partition, load_csv, save_csv, synth_dataset, CsvSchema, Heterogeneity, PartitionConfig};
use dpfl_core::diagnostics::{self, ArtifactManifest, DirectionScaling};
use dpfl_core::engine::{self, EngineError, Federation, RunSummary};
use dpfl_core::model::{init_params, BatchObjective, EvalSetObjective};
use dpfl_core::rng;
use dpfl_core::stats::compare_paired;

use crate::config::{self, RunConfig};
use crate::UsageError;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a federated training experiment from a JSON config.
    Train(TrainArgs),
    /// Accumulated (epsilon, delta) of the subsampled Gaussian mechanism.
    Account(AccountArgs),
    /// Closed-form sensitivity, privacy and generalization bounds.
    Bounds(BoundsArgs),
    /// Split a dataset into per-client shards.
    Partition(PartitionArgs),
    /// Loss-landscape slice and weight-perturbation robustness of a checkpoint.
    Landscape(LandscapeArgs),
    /// Measure local-update sensitivity to one changed example under SAM and SGD.
    SensitivityProbe(ProbeArgs),
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Account(a) => account(a),
        Command::Bounds(a) => bounds_cmd(a),
        Command::Partition(a) => partition(a),
        Command::Landscape(a) => landscape(a),
        Command::SensitivityProbe(a) => sensitivity_probe(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Loads a run config, or the defaults when no path is given.
fn load_or_default(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    match path {
        Some(p) => config::load(p, overrides),
        None => config::parse("{}", overrides, std::env::var(config::SEED_ENV).ok()),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set dp.noise_multiplier=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bins of the update-norm histogram.
    #[arg(long, default_value_t = 20)]
    histogram_bins: usize,
}

fn train(a: TrainArgs) -> Result<()> {
    let mut rc = config::load(&a.config, &a.set)?;
    if let Some(o) = a.out {
        rc.output_dir = o;
    }
    if a.histogram_bins == 0 {
        return Err(usage("--histogram-bins must be >= 1"));
    }
    let cfg = rc.experiment.clone();
    cfg.validate()?;
    let fed = Federation::new(cfg.clone())?;
    let out = &rc.output_dir;
    create_dir(out)?;
    write_json(&out.join("echoed-config.json"), &rc.to_json())?;

    let result = match fed.run() {
        Ok(r) => r,
        Err(EngineError::NonFinite(dump)) => {
            write_json(&out.join("abort-dump.json"), &dump)?;
            return Err(EngineError::NonFinite(dump)).context("training aborted; state written to abort-dump.json");
        }
        Err(e) => return Err(e.into()),
    };

    let mut manifest = ArtifactManifest::default();
    manifest.push("config", "echoed-config.json");
    engine::write_rounds_csv(create(&out.join("rounds.csv"))?, &result.records)?;
    manifest.push("rounds", "rounds.csv");
    let summary = RunSummary::new(&cfg, fed.sampled_per_round(), &result);
    write_json(&out.join("summary.json"), &summary)?;
    manifest.push("summary", "summary.json");
    checkpoint::save(&out.join("model.bin"), fed.spec(), &result.final_params)?;
    manifest.push("checkpoint", "model.bin");
    manifest.push("checkpoint_spec", "model.bin.json");
    if !result.records.is_empty() {
        let h = diagnostics::norm_histogram(&result.records, a.histogram_bins)?;
        diagnostics::write_histogram_csv(create(&out.join("norm_histogram.csv"))?, &h)?;
        manifest.push("norm_histogram", "norm_histogram.csv");
        let s = diagnostics::average_norm_series(&result.records)?;
        diagnostics::write_series_csv(create(&out.join("norm_series.csv"))?, &s)?;
        manifest.push("norm_series", "norm_series.csv");
    }
    write_json(&out.join("manifest.json"), &manifest)?;

    let eps = match result.privacy {
        Some(p) => format!("epsilon {:.4} at delta {:.3e}", p.epsilon, p.delta),
        None => "non-private".into(),
    };
    println!(
        "{}: {} rounds, test accuracy {:.4}, train accuracy {:.4}, {eps}; outputs in {}",
        cfg.variant,
        result.records.len(),
        result.final_test.accuracy,
        result.final_train.accuracy,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    /// Client sampling ratio.
    #[arg(long)]
    q: f64,
    /// Noise multiplier.
    #[arg(long)]
    sigma: f64,
    /// Number of rounds.
    #[arg(long)]
    rounds: u64,
    /// Target delta.
    #[arg(long, conflicts_with = "num_clients")]
    delta: Option<f64>,
    /// Set delta to 1 / num_clients.
    #[arg(long)]
    num_clients: Option<u64>,
    /// Also write account.json and account.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// 1, 2, 5, 10, 20, 50, ... below `t`, then `t`.
fn log_prefix(t: u64) -> Vec<u64> {
    let mut v = Vec::new();
    let mut decade = 1u64;
    'outer: loop {
        for m in [1, 2, 5] {
            let x = decade.saturating_mul(m);
            if x >= t {
                break 'outer;
            }
            v.push(x);
        }
        decade = decade.saturating_mul(10);
    }
    v.push(t);
    v
}

fn account(a: AccountArgs) -> Result<()> {
    if !(a.q > 0.0 && a.q <= 1.0) {
        return Err(usage("--q must be in (0, 1]"));
    }
    if !(a.sigma > 0.0 && a.sigma.is_finite()) {
        return Err(usage("--sigma must be > 0; sigma = 0 gives no privacy"));
    }
    let delta = match (a.delta, a.num_clients) {
        (Some(d), _) => d,
        (None, Some(m)) if m >= 1 => 1.0 / m as f64,
        (None, Some(_)) => return Err(usage("--num-clients must be >= 1")),
        (None, None) => return Err(usage("give --delta or --num-clients")),
    };
    if !(delta > 0.0 && delta < 1.0) {
        return Err(usage("delta must be in (0, 1)"));
    }
    let base = PrivacyLedger::new(&RdpOrderGrid::default(), a.q, a.sigma, delta)?;
    let mut table = Vec::new();
    println!("rounds\tepsilon\tbest_order");
    for t in log_prefix(a.rounds) {
        let (eps, order) = base.accumulate(t).epsilon()?;
        println!("{t}\t{eps}\t{order}");
        table.push((t, eps, order));
    }
    let (_, eps, order) = *table.last().expect("table is nonempty");
    println!("final: rounds={} epsilon={eps} delta={delta} best_order={order}", a.rounds);
    if let Some(dir) = a.out {
        create_dir(&dir)?;
        let mut w = csv::Writer::from_writer(create(&dir.join("account.csv"))?);
        w.write_record(["rounds", "epsilon", "best_order"])?;
        for (t, e, o) in &table {
            w.write_record([t.to_string(), e.to_string(), o.to_string()])?;
        }
        w.flush()?;
        write_json(
            &dir.join("account.json"),
            &json!({
                "q": a.q, "sigma": a.sigma, "delta": delta, "rounds": a.rounds,
                "epsilon": eps, "best_order": order,
                "table": table.iter().map(|(t, e, o)| json!({"rounds": t, "epsilon": e, "best_order": o})).collect::<Vec<_>>(),
            }),
        )?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Local learning rate.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// SAM perturbation radius.
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// Local steps per round.
    #[arg(long, default_value_t = 10)]
    local_steps: u64,
    /// Smoothness constant L.
    #[arg(long, default_value_t = 1.0)]
    lipschitz: f64,
    /// Local gradient variance bound.
    #[arg(long, default_value_t = 1.0)]
    sigma_l: f64,
    /// Total training samples N.
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    /// Clients per round m.
    #[arg(long, default_value_t = 5)]
    participants: u64,
    /// Noise multiplier.
    #[arg(long, default_value_t = 0.95)]
    sigma: f64,
    /// Clipping threshold.
    #[arg(long, default_value_t = 0.2)]
    clip: f64,
    /// Model dimension.
    #[arg(long, default_value_t = 837)]
    dim: u64,
    /// Rounds T.
    #[arg(long, default_value_t = 200)]
    rounds: u64,
    /// Slack delta of the per-round bound.
    #[arg(long, default_value_t = 0.01)]
    delta_tilde: f64,
    /// Also write bounds.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn bound_err(e: bounds::BoundsError) -> anyhow::Error {
    usage(e.to_string())
}

fn bounds_cmd(a: BoundsArgs) -> Result<()> {
    let sam = bounds::sensitivity_bound_sam(a.eta, a.rho, a.local_steps, a.lipschitz).map_err(bound_err)?;
    let sgd = bounds::sensitivity_bound_sgd(a.eta, a.sigma_l, a.local_steps, a.lipschitz).map_err(bound_err)?;
    let inp = GenBoundInputs {
        total_samples: a.samples,
        participants: a.participants,
        rho: a.rho,
        sigma: a.sigma,
        clip: a.clip,
        dim: a.dim,
        rounds: a.rounds,
        delta_tilde: a.delta_tilde,
    };
    let eps_tilde = bounds::gen_epsilon_tilde(&inp, a.lipschitz).map_err(bound_err)?;
    let round = bounds::gen_round_delta(&inp, a.lipschitz).map_err(bound_err)?;
    let comp = bounds::gen_composition(eps_tilde, round.round_delta, a.rounds, a.delta_tilde).map_err(bound_err)?;
    let gap = if comp.epsilon > 0.0 {
        Some(bounds::generalization_gap_bound(comp.epsilon, comp.delta.unwrap_or(0.0)).map_err(bound_err)?)
    } else {
        None
    };
    let sample_size = match comp.delta {
        Some(d) if comp.epsilon > 0.0 && d > 0.0 => Some(bounds::required_sample_size(comp.epsilon, d).map_err(bound_err)?),
        _ => None,
    };

    println!("sensitivity_bound_sam = {sam}");
    println!("sensitivity_bound_sgd = {sgd}");
    println!("epsilon_tilde = {eps_tilde}");
    println!("round_delta = {} (chernoff optimum {}, integer exponent {} gives {})", round.round_delta, round.analytic, round.best_t, round.constrained);
    println!("epsilon_prime = {}", comp.epsilon);
    match comp.delta {
        Some(d) => println!("delta_prime = {d}"),
        None => println!("delta_prime = undefined (needs T * epsilon_tilde > epsilon_prime)"),
    }
    match gap {
        Some(g) => println!("generalization gap < {} with probability > {}", g.gap, g.confidence),
        None => println!("generalization gap bound: undefined at epsilon_prime = 0"),
    }
    if let Some(n) = sample_size {
        println!("sample-size condition N >= {n:.1}: {}", if a.samples as f64 >= n { "met" } else { "not met" });
    }
    if let Some(dir) = a.out {
        create_dir(&dir)?;
        write_json(
            &dir.join("bounds.json"),
            &json!({
                "inputs": inp, "eta": a.eta, "local_steps": a.local_steps,
                "lipschitz": a.lipschitz, "sigma_l": a.sigma_l,
                "sensitivity_bound_sam": sam, "sensitivity_bound_sgd": sgd,
                "epsilon_tilde": eps_tilde, "round_delta": round, "composition": comp,
                "generalization": gap, "required_sample_size": sample_size,
                "sample_size_condition_met": sample_size.map(|n| a.samples as f64 >= n),
            }),
        )?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Headered CSV input; a synthetic dataset is generated when absent.
    #[arg(long, requires = "features")]
    csv: Option<PathBuf>,
    /// Feature columns in the CSV.
    #[arg(long)]
    features: Option<usize>,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Synthetic classes.
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Synthetic feature dimension.
    #[arg(long, default_value_t = 20)]
    dims: usize,
    /// Synthetic example count.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Synthetic class-center distance from the origin.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Synthetic data seed.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Number of clients M.
    #[arg(long, default_value_t = 50)]
    clients: usize,
    /// Dirichlet concentration, or `iid`.
    #[arg(long, default_value = "0.6")]
    alpha: Heterogeneity,
    /// Partition seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "dpfl-out/partition")]
    out: PathBuf,
}

fn partition(a: PartitionArgs) -> Result<()> {
    let ds = match &a.csv {
        Some(path) => {
            let schema = CsvSchema {
                label_column: a.label_column.clone(),
                ..CsvSchema::new(a.features.expect("clap enforces --features"))
            };
            load_csv(path, &schema).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            if a.classes < 2 || a.samples < a.classes || a.dims == 0 {
                return Err(usage("need --classes >= 2, --samples >= --classes and --dims >= 1"));
            }
            synth_dataset(a.classes, a.dims, a.samples, a.separation, a.data_seed)?
        }
    };
    if a.clients == 0 || a.clients > ds.len() {
        return Err(usage(format!("--clients must be in [1, {}]", ds.len())));
    }
    let cfg = PartitionConfig {
        num_clients: a.clients,
        dirichlet_alpha: a.alpha,
        seed: a.seed,
    };
    let shards = dirichlet_partition(&ds, &cfg)?;
    create_dir(&a.out)?;
    let mut manifest = ArtifactManifest::default();
    let mut summary = Vec::new();
    for s in &shards {
        let name = format!("shard_{:04}.csv", s.client_id);
        save_csv(a.out.join(&name), &ds.subset(&s.indices))?;
        manifest.push("shard", &name);
        summary.push(json!({
            "client_id": s.client_id, "size": s.len(), "file": name,
            "label_histogram": ds.label_histogram(&s.indices),
        }));
    }
    write_json(
        &a.out.join("partition.json"),
        &json!({"config": cfg, "examples": ds.len(), "classes": ds.class_count(), "shards": summary}),
    )?;
    manifest.push("partition", "partition.json");
    write_json(&a.out.join("manifest.json"), &manifest)?;
    let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    println!(
        "{} examples into {} shards (min {}, max {}); written to {}",
        ds.len(),
        shards.len(),
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scaling {
    PerBlock,
    Unit,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    /// Checkpoint written by `train` (its `.json` sidecar must sit next to it).
    #[arg(long)]
    model: PathBuf,
    /// Run config naming the evaluation data; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Which split to evaluate on.
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Grid spans [-w, w] along both directions.
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    /// Points per axis (odd, >= 3).
    #[arg(long, default_value_t = 21)]
    resolution: usize,
    #[arg(long, value_enum, default_value = "per-block")]
    scaling: Scaling,
    /// Perturbation radii for the robustness probe.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.5")]
    radii: Vec<f64>,
    /// Random directions per radius.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "dpfl-out/landscape")]
    out: PathBuf,
}

fn landscape(a: LandscapeArgs) -> Result<()> {
    let (spec, params) = checkpoint::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let mut rc = load_or_default(a.config.as_deref(), &a.set)?;
    if a.config.is_some() && rc.experiment.model != spec {
        return Err(usage("the config's model does not match the checkpoint"));
    }
    rc.experiment.model = spec.clone();
    rc.experiment.validate()?;
    let (train, test) = engine::load_data(&rc.experiment)?;
    let ds = match a.split {
        Split::Train => train,
        Split::Test => test,
    };
    let batches = ds.batches(1024);
    let objective = EvalSetObjective { spec: &spec, batches: &batches };
    let scaling = match a.scaling {
        Scaling::PerBlock => DirectionScaling::PerBlock,
        Scaling::Unit => DirectionScaling::Unit,
    };
    let grid = diagnostics::landscape_slice(&objective, &params, a.half_width, a.resolution, scaling, a.seed)
        .map_err(|e| usage(e.to_string()))?;
    let robust = diagnostics::perturbation_robustness(&objective, &params, &a.radii, a.trials, a.seed)
        .map_err(|e| usage(e.to_string()))?;

    create_dir(&a.out)?;
    let mut manifest = ArtifactManifest::default();
    diagnostics::write_landscape_csv(create(&a.out.join("landscape.csv"))?, &grid)?;
    manifest.push("landscape", "landscape.csv");
    diagnostics::write_robustness_csv(create(&a.out.join("robustness.csv"))?, &robust)?;
    manifest.push("robustness", "robustness.csv");
    write_json(
        &a.out.join("landscape.json"),
        &json!({
            "axis": grid.axis, "center_loss": grid.center_loss(), "seed": a.seed,
            "scaling": scaling, "resolution": a.resolution, "half_width": a.half_width,
        }),
    )?;
    manifest.push("landscape_meta", "landscape.json");
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!("center loss {:.6}; grid and robustness written to {}", grid.center_loss(), a.out.display());
    for p in &robust {
        println!("radius {}: mean loss increase {}", p.radius, p.mean_loss_increase);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Run config supplying model, local training and data; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shard pairs to compare.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Examples per shard.
    #[arg(long, default_value_t = 32)]
    shard_size: usize,
    /// Examples replaced in the adjacent shard.
    #[arg(long, default_value_t = 1)]
    differing: usize,
    /// One-sided confidence for the SAM <= SGD comparison.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "dpfl-out/sensitivity")]
    out: PathBuf,
}

fn sensitivity_probe(a: ProbeArgs) -> Result<()> {
    if a.trials < 2 {
        return Err(usage("--trials must be >= 2 for the paired comparison"));
    }
    if !(a.confidence > 0.0 && a.confidence < 1.0) {
        return Err(usage("--confidence must be in (0, 1)"));
    }
    let rc = load_or_default(a.config.as_deref(), &a.set)?;
    let cfg = rc.experiment;
    cfg.validate()?;
    let (train, _) = engine::load_data(&cfg)?;
    let opt = cfg.optimizer_config();
    let task = SensitivityTask {
        dataset: train,
        spec: cfg.model.clone(),
        shard_size: a.shard_size,
        start: None,
        differing: a.differing,
    };
    let report = bounds::empirical_sensitivity(&task, &opt, a.trials, a.seed).map_err(|e| usage(e.to_string()))?;
    let sam: Vec<f64> = report.per_trial.iter().map(|p| p.0).collect();
    let sgd: Vec<f64> = report.per_trial.iter().map(|p| p.1).collect();
    let cmp = compare_paired(&sam, &sgd, a.confidence);

    // Problem constants estimated at a fresh initialization.
    let start = init_params(&cfg.model, a.seed);
    let probe_idx: Vec<usize> = (0..task.dataset.len().min(256)).collect();
    let probe_batch = task.dataset.batch(&probe_idx)?;
    let mut r = rng::stream(a.seed, &[0x50_52_4f_42]);
    let l_hat = bounds::estimate_lipschitz(&BatchObjective::new(&cfg.model, &probe_batch), &start, 20, 0.1, &mut r)?;
    let shard = dpfl_core::ClientShard {
        client_id: 0,
        indices: probe_idx,
    };
    let sigma_l = bounds::estimate_gradient_std(&start, &shard, &task.dataset, &cfg.model, opt.batch_size, 20, &mut r)?;
    let k = opt.local_steps as u64;
    let bound_sam = bounds::sensitivity_bound_sam(opt.learning_rate, opt.perturbation_radius, k, l_hat).ok();
    let bound_sgd = bounds::sensitivity_bound_sgd(opt.learning_rate, sigma_l, k, l_hat).ok();

    create_dir(&a.out)?;
    let mut w = csv::Writer::from_writer(create(&a.out.join("sensitivity_trials.csv"))?);
    w.write_record(["trial", "sq_diff_sam", "sq_diff_sgd"])?;
    for (i, (s, g)) in report.per_trial.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string(), g.to_string()])?;
    }
    w.flush()?;
    write_json(
        &a.out.join("sensitivity.json"),
        &json!({
            "trials": a.trials, "shard_size": a.shard_size, "differing": a.differing, "seed": a.seed,
            "mean_sq_sam": report.mean_sq_sam, "mean_sq_sgd": report.mean_sq_sgd,
            "comparison": cmp,
            "estimated_lipschitz": l_hat, "estimated_sigma_l": sigma_l,
            "bound_sam": bound_sam, "bound_sgd": bound_sgd,
        }),
    )?;
    let mut manifest = ArtifactManifest::default();
    manifest.push("trials", "sensitivity_trials.csv");
    manifest.push("summary", "sensitivity.json");
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!(
        "mean squared update difference: SAM {:.6e}, SGD {:.6e}; SAM <= SGD {} at {:.0}% (upper bound on mean difference {:.3e})",
        report.mean_sq_sam,
        report.mean_sq_sgd,
        if cmp.consistent { "consistent" } else { "rejected" },
        a.confidence * 100.0,
        cmp.upper_bound
    );
    Ok(())
}
