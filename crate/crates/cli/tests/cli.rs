use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dpfl_core::{PrivacyLedger, RdpOrderGrid};
use serde_json::Value;

const SMALL: &str = r#"{
  "rounds": 4,
  "eval_every": 2,
  "model": {"layer_sizes": [20, 8, 5]},
  "partition": {"num_clients": 10},
  "dp": {"client_sample_ratio": 0.3},
  "data": {"source": "synthetic", "classes": 5, "samples": 500, "separation": 2.0, "seed": 0}
}"#;

fn dpfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpfl"))
        .args(args)
        .env_remove("DPFL_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("run.json");
    fs::write(&p, SMALL).unwrap();
    p.display().to_string()
}

fn train(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dpfl(&args)
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in ["train", "account", "bounds", "partition", "landscape", "sensitivity-probe"] {
        let o = dpfl(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    assert_eq!(code(&dpfl(&["--help"])), 0);
    assert_eq!(code(&dpfl(&[])), 2);
    assert_eq!(code(&dpfl(&["no-such-command"])), 2);
}

#[test]
fn config_problems_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&train("/nonexistent/run.json", &out, &[])), 2);

    let cfg = write_config(dir.path());
    let o = train(&cfg, &out, &["--set", "dp.noise_multiplier=-1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dp"), "{}", String::from_utf8_lossy(&o.stderr));

    let o = train(&cfg, &out, &["--set", "roundz=3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("roundz"));
    assert_eq!(code(&dpfl(&["--threads", "0", "account", "--q", "0.1", "--sigma", "1", "--rounds", "5", "--delta", "0.01"])), 2);
}

#[test]
fn train_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&train(&cfg, &a, &["--set", "rounds=1"])), 0);
    let rows = fs::read_to_string(a.join("rounds.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2, "{rows}");

    assert_eq!(code(&train(&cfg, &a, &[])), 0);
    assert_eq!(code(&train(&cfg, &b, &[])), 0);
    let first = fs::read(a.join("rounds.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("rounds.csv")).unwrap());
    assert_eq!(fs::read_to_string(a.join("rounds.csv")).unwrap().lines().count(), 5);

    let mut threaded = vec!["--threads", "1", "train", "--config", &cfg, "--out"];
    threaded.push(c.to_str().unwrap());
    assert_eq!(code(&dpfl(&threaded)), 0);
    assert_eq!(first, fs::read(c.join("rounds.csv")).unwrap());

    for f in ["echoed-config.json", "summary.json", "model.bin", "model.bin.json", "norm_histogram.csv", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    // The echoed config alone reproduces the run.
    let echoed = a.join("echoed-config.json").display().to_string();
    let d = dir.path().join("d");
    assert_eq!(code(&train(&echoed, &d, &[])), 0);
    assert_eq!(first, fs::read(d.join("rounds.csv")).unwrap());

    let summary: Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rounds"], 4);
    assert!(summary["privacy"]["epsilon"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_environment_variable_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&train(&cfg, &a, &[])), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_dpfl"))
        .args(["train", "--config", &cfg, "--out", b.to_str().unwrap()])
        .env("DPFL_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(a.join("rounds.csv")).unwrap(), fs::read(b.join("rounds.csv")).unwrap());
    let echoed: Value = serde_json::from_str(&fs::read_to_string(b.join("echoed-config.json")).unwrap()).unwrap();
    assert_eq!(echoed["master_seed"], 7);
}

fn final_epsilon(args: &[&str]) -> f64 {
    let mut all = vec!["account"];
    all.extend_from_slice(args);
    let o = dpfl(&all);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("final:")).expect("final line");
    let eps = line.split_whitespace().find_map(|t| t.strip_prefix("epsilon=")).unwrap();
    eps.parse().unwrap()
}

#[test]
fn account_agrees_with_library() {
    let eps = final_epsilon(&["--q", "0.1", "--sigma", "0.95", "--rounds", "200", "--delta", "0.002"]);
    let lib = PrivacyLedger::new(&RdpOrderGrid::default(), 0.1, 0.95, 0.002)
        .unwrap()
        .accumulate(200)
        .epsilon()
        .unwrap()
        .0;
    assert_eq!(eps, lib);
    let doubled = final_epsilon(&["--q", "0.1", "--sigma", "0.95", "--rounds", "400", "--delta", "0.002"]);
    assert!(doubled > eps);
    let quieter = final_epsilon(&["--q", "0.1", "--sigma", "2.0", "--rounds", "200", "--num-clients", "500"]);
    assert!(quieter < eps);
    assert_eq!(code(&dpfl(&["account", "--q", "0.1", "--sigma", "0", "--rounds", "10", "--delta", "0.01"])), 2);
}

#[test]
fn account_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("acct");
    let o = dpfl(&["account", "--q", "0.1", "--sigma", "1", "--rounds", "30", "--delta", "0.01", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("account.csv")).unwrap();
    let rounds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rounds, ["1", "2", "5", "10", "20", "30"]);
}

#[test]
fn partition_iid_writes_every_example_once() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("part");
    let o = dpfl(&["partition", "--samples", "1000", "--clients", "10", "--alpha", "iid", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let shards: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("shard_"))
        .collect();
    assert_eq!(shards.len(), 10);
    let rows: usize = shards
        .iter()
        .map(|n| fs::read_to_string(out.join(n)).unwrap().lines().count() - 1)
        .sum();
    assert_eq!(rows, 1000);
    assert_eq!(code(&dpfl(&["partition", "--samples", "5", "--clients", "10", "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn bounds_prints_zero_without_perturbation() {
    let o = dpfl(&["bounds", "--rho", "0"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "sensitivity_bound_sam = 0"), "{text}");
    assert!(text.lines().any(|l| l == "epsilon_tilde = 0"), "{text}");
    assert_eq!(code(&dpfl(&["bounds", "--eta", "1", "--local-steps", "10"])), 2);
}

#[test]
fn landscape_and_probe_run_on_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&train(&cfg, &run, &[])), 0);
    let scape = dir.path().join("scape");
    let model = run.join("model.bin");
    let o = dpfl(&[
        "landscape", "--model", model.to_str().unwrap(), "--config", &cfg, "--resolution", "3",
        "--radii", "0,0.1", "--trials", "4", "--out", scape.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(scape.join("landscape.csv")).unwrap();
    assert_eq!(grid.lines().count(), 10);
    assert!(scape.join("robustness.csv").exists());
    let o = dpfl(&["landscape", "--model", model.to_str().unwrap(), "--resolution", "4", "--out", scape.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let probe = dir.path().join("probe");
    let o = dpfl(&["sensitivity-probe", "--config", &cfg, "--trials", "4", "--shard-size", "16", "--out", probe.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(probe.join("sensitivity.json")).unwrap()).unwrap();
    assert!(report["mean_sq_sam"].as_f64().unwrap() >= 0.0, "{report}");
}
