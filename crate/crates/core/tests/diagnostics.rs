use dpfl_core::diagnostics::{
    average_norm_series, landscape_slice, norm_histogram, perturbation_robustness, time_averaged_norm,
    DirectionScaling, LandscapeGrid,
};
use dpfl_core::engine::Federation;
use dpfl_core::model::{evaluate, EvalSetObjective, QuadraticBowl};
use dpfl_core::stats::compare_paired;
use dpfl_core::{ExperimentConfig, Variant};

/// Least-squares fit of `c0 + c1 a + c2 b + c3 a^2 + c4 ab + c5 b^2`, returning R^2.
fn quadratic_r2(grid: &LandscapeGrid) -> f64 {
    let rows: Vec<([f64; 6], f64)> = grid
        .cells()
        .map(|(a, b, y)| ([1.0, a, b, a * a, a * b, b * b], y))
        .collect();
    let mut m = [[0.0; 7]; 6];
    for (x, y) in &rows {
        for i in 0..6 {
            for j in 0..6 {
                m[i][j] += x[i] * x[j];
            }
            m[i][6] += x[i] * y;
        }
    }
    for col in 0..6 {
        let pivot = (col..6).max_by(|&r, &s| m[r][col].abs().total_cmp(&m[s][col].abs())).unwrap();
        m.swap(col, pivot);
        for r in 0..6 {
            if r != col {
                let f = m[r][col] / m[col][col];
                let pivot_row = m[col];
                for (x, p) in m[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let coef: Vec<f64> = (0..6).map(|i| m[i][6] / m[i][i]).collect();
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (x, y) in &rows {
        let fit: f64 = x.iter().zip(&coef).map(|(a, b)| a * b).sum();
        ss_res += (y - fit).powi(2);
        ss_tot += (y - mean).powi(2);
    }
    1.0 - ss_res / ss_tot
}

fn bowl() -> QuadraticBowl {
    QuadraticBowl {
        curvature: (0..30).map(|i| 0.2 + 0.1 * i as f64).collect(),
        minimum: (0..30).map(|i| (i as f64 * 0.37).sin()).collect(),
    }
}

#[test]
fn quadratic_loss_gives_quadratic_slice() {
    let f = bowl();
    let center: Vec<f64> = (0..30).map(|i| (i as f64 * 0.11).cos()).collect();
    for scaling in [DirectionScaling::Unit, DirectionScaling::PerBlock] {
        let grid = landscape_slice(&f, &center, 1.5, 11, scaling, 3).unwrap();
        let r2 = quadratic_r2(&grid);
        assert!(r2 >= 0.999, "{scaling:?}: R^2 = {r2}");
    }
}

#[test]
fn zero_width_slice_is_constant() {
    let f = bowl();
    let center = vec![0.5; 30];
    let grid = landscape_slice(&f, &center, 0.0, 5, DirectionScaling::Unit, 0).unwrap();
    let c = grid.center_loss();
    assert!(grid.cells().all(|(_, _, y)| y == c));
}

fn trained(variant: Variant, seed: u64, rounds: u64) -> (Federation, Vec<f64>) {
    let cfg = ExperimentConfig {
        variant,
        master_seed: seed,
        rounds,
        ..ExperimentConfig::default()
    };
    let fed = Federation::new(cfg).unwrap();
    let params = fed.run().unwrap().final_params;
    (fed, params)
}

#[test]
fn center_cell_is_the_evaluated_loss() {
    let (fed, params) = trained(Variant::DpFedsam, 0, 5);
    let objective = EvalSetObjective {
        spec: fed.spec(),
        batches: fed.test_batches(),
    };
    let grid = landscape_slice(&objective, &params, 0.5, 5, DirectionScaling::PerBlock, 1).unwrap();
    let direct = evaluate(&params, fed.test_batches(), fed.spec()).unwrap().mean_loss;
    assert_eq!(grid.center_loss(), direct);
}

#[test]
fn robustness_is_monotone_on_convex_loss() {
    let f = bowl();
    let params = vec![0.0; 30];
    let radii = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0];
    let pts = perturbation_robustness(&f, &params, &radii, 25, 4).unwrap();
    assert_eq!(pts[0].mean_loss_increase, 0.0);
    assert!(pts.windows(2).all(|w| w[1].mean_loss_increase >= w[0].mean_loss_increase));
    assert_eq!(pts, perturbation_robustness(&f, &params, &radii, 25, 4).unwrap());
}

#[test]
fn norm_series_and_histogram_describe_records() {
    let (fed, _) = trained(Variant::DpFedavg, 2, 12);
    let records = fed.run().unwrap().records;
    let series = average_norm_series(&records).unwrap();
    assert_eq!(series.len(), 12);
    let mean = series.iter().map(|p| p.1).sum::<f64>() / 12.0;
    assert!((time_averaged_norm(&records).unwrap() - mean).abs() < 1e-15);
    let h = norm_histogram(&records, 7).unwrap();
    assert_eq!(h.edges.len(), 8);
    assert_eq!(h.counts.iter().sum::<usize>(), records.iter().map(|r| r.pre_clip_norms.len()).sum::<usize>());
}

/// Matched five-seed comparison of the final models' sensitivity to random
/// weight perturbation at radius 0.1.
#[test]
fn fedsam_is_more_perturbation_robust() {
    let increase = |variant| {
        (0..5)
            .map(|seed| {
                let (fed, params) = trained(variant, seed, 200);
                let objective = EvalSetObjective {
                    spec: fed.spec(),
                    batches: fed.test_batches(),
                };
                perturbation_robustness(&objective, &params, &[0.1], 20, seed).unwrap()[0].mean_loss_increase
            })
            .collect::<Vec<f64>>()
    };
    let sam = increase(Variant::DpFedsam);
    let sgd = increase(Variant::DpFedavg);
    let cmp = compare_paired(&sam, &sgd, 0.90);
    assert!(cmp.consistent, "{cmp:?}");
}
