use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dpfl_core::accountant::{rdp_binomial, rdp_quadrature};
use dpfl_core::data::synth_dataset;
use dpfl_core::engine::Federation;
use dpfl_core::mechanism::topk_sparsify;
use dpfl_core::model::{init_params, loss_and_grad, ModelSpec};
use dpfl_core::{rng, ExperimentConfig, PrivacyLedger, RdpOrderGrid};
use rand::Rng;

fn model(c: &mut Criterion) {
    let spec = ModelSpec::default();
    let ds = synth_dataset(5, spec.input_dim(), 32, 2.0, 0).unwrap();
    let batch = ds.batch(&(0..32).collect::<Vec<_>>()).unwrap();
    let w = init_params(&spec, 0);
    c.bench_function("loss_and_grad/default_mlp/batch32", |b| {
        b.iter(|| loss_and_grad(black_box(&w), &batch, &spec).unwrap())
    });
}

fn sparsify(c: &mut Criterion) {
    let mut g = c.benchmark_group("topk");
    for d in [837usize, 100_000] {
        let mut r = rng::stream(1, &[d as u64]);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let k = (0.4 * d as f64).round() as usize;
        g.bench_function(format!("d={d}"), |b| b.iter(|| topk_sparsify(black_box(&x), k).unwrap()));
    }
    g.finish();
}

fn accountant(c: &mut Criterion) {
    c.bench_function("rdp/binomial/alpha32", |b| b.iter(|| rdp_binomial(0.1, 0.95, black_box(32)).unwrap()));
    c.bench_function("rdp/quadrature/alpha1.5", |b| {
        b.iter(|| rdp_quadrature(0.1, 0.95, black_box(1.5)).unwrap())
    });
    c.bench_function("rdp/ledger/default_grid", |b| {
        b.iter(|| PrivacyLedger::new(&RdpOrderGrid::default(), 0.1, black_box(0.95), 0.02).unwrap())
    });
}

fn engine(c: &mut Criterion) {
    let fed = Federation::new(ExperimentConfig::default()).unwrap();
    let state = fed.initial_state();
    c.bench_function("run_round/default_config", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| fed.run_round(&mut s).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, model, sparsify, accountant, engine);
criterion_main!(benches);
