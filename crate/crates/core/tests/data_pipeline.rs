use dpfl_core::data::{dirichlet_partition, read_csv, synth_dataset, write_csv, CsvSchema};
use dpfl_core::model::{init_params, Activation, ModelSpec};
use dpfl_core::optimizer::{run_local_round, OptimizerConfig, OptimizerKind};
use dpfl_core::{ClientShard, Dataset, Heterogeneity, PartitionConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn global_histogram(ds: &Dataset) -> Vec<usize> {
    ds.label_histogram(&(0..ds.len()).collect::<Vec<_>>())
}

fn partition(ds: &Dataset, clients: usize, h: Heterogeneity, seed: u64) -> Vec<ClientShard> {
    dirichlet_partition(
        ds,
        &PartitionConfig {
            num_clients: clients,
            dirichlet_alpha: h,
            seed,
        },
    )
    .unwrap()
}

/// Pearson statistic of the shard-by-label table against independence.
fn chi_square_independence(ds: &Dataset, shards: &[ClientShard]) -> (f64, f64) {
    let global = global_histogram(ds);
    let n = ds.len() as f64;
    let mut stat = 0.0;
    for s in shards {
        let hist = ds.label_histogram(&s.indices);
        for (c, &observed) in hist.iter().enumerate() {
            let expected = s.len() as f64 * global[c] as f64 / n;
            if expected > 0.0 {
                stat += (observed as f64 - expected).powi(2) / expected;
            }
        }
    }
    let dof = ((shards.len() - 1) * (ds.class_count() - 1)) as f64;
    (stat, ChiSquared::new(dof).unwrap().inverse_cdf(0.99))
}

fn mean_total_variation(ds: &Dataset, shards: &[ClientShard]) -> f64 {
    let global = global_histogram(ds);
    let n = ds.len() as f64;
    shards
        .iter()
        .map(|s| {
            let hist = ds.label_histogram(&s.indices);
            0.5 * hist
                .iter()
                .zip(&global)
                .map(|(&h, &g)| (h as f64 / s.len() as f64 - g as f64 / n).abs())
                .sum::<f64>()
        })
        .sum::<f64>()
        / shards.len() as f64
}

#[test]
fn partition_is_exact_and_deterministic() {
    let ds = synth_dataset(5, 8, 2_000, 2.0, 3).unwrap();
    for h in [Heterogeneity::Iid, Heterogeneity::Dirichlet(0.1), Heterogeneity::Dirichlet(5.0)] {
        let shards = partition(&ds, 40, h, 11);
        let mut all: Vec<usize> = shards.iter().flat_map(|s| s.indices.iter().copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>(), "{h}");
        assert!(shards.iter().all(|s| !s.is_empty()));
        assert_eq!(shards, partition(&ds, 40, h, 11));
    }
}

#[test]
fn iid_and_huge_alpha_pass_chi_square() {
    let ds = synth_dataset(5, 4, 10_000, 1.0, 0).unwrap();
    for h in [Heterogeneity::Iid, Heterogeneity::Dirichlet(1e6)] {
        let (stat, critical) = chi_square_independence(&ds, &partition(&ds, 10, h, 7));
        assert!(stat < critical, "{h}: chi2 {stat} >= {critical}");
    }
}

#[test]
fn smaller_alpha_is_more_heterogeneous() {
    let ds = synth_dataset(5, 4, 10_000, 1.0, 0).unwrap();
    let tv = |alpha: f64| {
        (0..20)
            .map(|seed| mean_total_variation(&ds, &partition(&ds, 50, Heterogeneity::Dirichlet(alpha), seed)))
            .sum::<f64>()
            / 20.0
    };
    let (low, high) = (tv(0.3), tv(0.6));
    assert!(low > high, "TV at 0.3 = {low}, at 0.6 = {high}");
}

#[test]
fn synthetic_is_balanced_and_reproducible() {
    let a = synth_dataset(4, 6, 1_000, 3.0, 9).unwrap();
    assert_eq!(a, synth_dataset(4, 6, 1_000, 3.0, 9).unwrap());
    assert_ne!(a, synth_dataset(4, 6, 1_000, 3.0, 10).unwrap());
    assert_eq!(global_histogram(&a), vec![250; 4]);
}

#[test]
fn class_means_sit_at_separation() {
    // Orthonormal centers scaled by s: each class mean has norm s and any
    // two means are s * sqrt(2) apart, up to sampling noise of order
    // sqrt(dims / n_per_class).
    let (classes, dims, n, s) = (3, 10, 30_000, 4.0);
    let ds = synth_dataset(classes, dims, n, s, 1).unwrap();
    let mut means = vec![vec![0.0; dims]; classes];
    for i in 0..ds.len() {
        let c = ds.labels()[i];
        for (m, x) in means[c].iter_mut().zip(ds.row(i)) {
            *m += x / (n / classes) as f64;
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 4.0 * (dims as f64 / (n / classes) as f64).sqrt();
    for a in 0..classes {
        assert!((norm(&means[a]) - s).abs() < tol);
        for b in a + 1..classes {
            let d: Vec<f64> = means[a].iter().zip(&means[b]).map(|(x, y)| x - y).collect();
            assert!((norm(&d) - s * 2f64.sqrt()).abs() < tol);
        }
    }
}

fn train_linear(ds: &Dataset, steps: usize) -> (ModelSpec, Vec<f64>) {
    let spec = ModelSpec::new(vec![ds.dim(), ds.class_count()], Activation::Relu).unwrap();
    let shard = ClientShard {
        client_id: 0,
        indices: (0..ds.len()).collect(),
    };
    let cfg = OptimizerConfig {
        kind: OptimizerKind::Sgd,
        learning_rate: 0.5,
        local_steps: steps,
        full_batch: true,
        ..OptimizerConfig::default()
    };
    let w0 = init_params(&spec, 0);
    let out = run_local_round(&w0, &shard, ds, &cfg, &spec, 0).unwrap();
    let w = w0.iter().zip(&out.delta).map(|(a, b)| a + b).collect();
    (spec, w)
}

fn accuracy(ds: &Dataset, spec: &ModelSpec, w: &[f64]) -> f64 {
    dpfl_core::model::evaluate(w, &ds.batches(512), spec).unwrap().accuracy
}

#[test]
fn separated_classes_are_linearly_learnable() {
    let (train, test) = synth_dataset(2, 5, 4_000, 10.0, 2).unwrap().train_test_split(0.5, 0);
    let (spec, w) = train_linear(&train, 50);
    assert!(accuracy(&test, &spec, &w) >= 0.99);
}

#[test]
fn indistinguishable_classes_stay_at_chance() {
    let ds = synth_dataset(4, 5, 8_000, 0.0, 4).unwrap();
    let (train, test) = ds.train_test_split(0.5, 0);
    let (spec, w) = train_linear(&train, 50);
    let acc = accuracy(&test, &spec, &w);
    assert!((acc - 0.25).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn csv_round_trip_is_exact() {
    let ds = synth_dataset(3, 4, 50, 1.5, 5).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &ds).unwrap();
    let back = read_csv(buf.as_slice(), &CsvSchema::new(4)).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn csv_errors_name_the_line() {
    let text = "f0,f1,label\n1.0,2.0,0\n1.0,oops,1\n";
    let err = read_csv(text.as_bytes(), &CsvSchema::new(2)).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
    let ok = read_csv("f0,f1,label\n1,2,0\n3,4,1\n5,6,0\n".as_bytes(), &CsvSchema::new(2)).unwrap();
    assert_eq!(ok.len(), 3);
}
