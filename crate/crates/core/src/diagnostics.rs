//! Post-hoc analysis of recorded runs and trained models.

use std::io::Write;
use std::path::PathBuf;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RoundRecord;
use crate::model::{ModelError, Objective, ParamVector};
use crate::rng;
use crate::vecops;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("no recorded rounds")]
    NoRecords,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histogram of every recorded pre-clip update norm. A constant sample
/// occupies only the first bin.
pub fn norm_histogram(records: &[RoundRecord], bins: usize) -> Result<Histogram, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::NoRecords);
    }
    if bins == 0 {
        return Err(DiagnosticsError::InvalidArgument("bins must be >= 1".into()));
    }
    let norms: Vec<f64> = records.iter().flat_map(|r| r.pre_clip_norms.iter().copied()).collect();
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0; bins];
    for x in norms {
        let i = (((x - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// `(round, mean pre-clip norm over the sampled clients)`.
pub fn average_norm_series(records: &[RoundRecord]) -> Result<Vec<(u64, f64)>, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::NoRecords);
    }
    Ok(records.iter().map(|r| (r.round, r.mean_pre_clip_norm())).collect())
}

/// Time average of [`average_norm_series`].
pub fn time_averaged_norm(records: &[RoundRecord]) -> Result<f64, DiagnosticsError> {
    let s = average_norm_series(records)?;
    Ok(s.iter().map(|p| p.1).sum::<f64>() / s.len() as f64)
}

/// How random slice directions are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionScaling {
    /// Each parameter block of the direction gets the norm of the same block
    /// of the center; blocks of zero norm are zeroed.
    #[default]
    PerBlock,
    /// The whole direction has unit norm.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeGrid {
    pub center: ParamVector,
    pub direction_u: ParamVector,
    pub direction_v: ParamVector,
    /// Coordinates along each axis, symmetric with an exact 0 in the middle.
    pub axis: Vec<f64>,
    /// `losses[i][j]` is the loss at `center + axis[i] u + axis[j] v`.
    pub losses: Vec<Vec<f64>>,
}

impl LandscapeGrid {
    pub fn center_loss(&self) -> f64 {
        let c = self.axis.len() / 2;
        self.losses[c][c]
    }

    /// `(a, b, loss)` for every cell, row-major.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.axis.iter().enumerate().flat_map(move |(i, &a)| {
            self.axis
                .iter()
                .enumerate()
                .map(move |(j, &b)| (a, b, self.losses[i][j]))
        })
    }
}

fn random_direction(center: &[f64], blocks: &[std::ops::Range<usize>], scaling: DirectionScaling, seed: u64, which: u64) -> ParamVector {
    let mut rng = rng::stream(seed, &[0x4c41_4e44, which]);
    let mut d: Vec<f64> = (0..center.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    match scaling {
        DirectionScaling::Unit => {
            let n = vecops::norm2(&d);
            vecops::scale(1.0 / n, &mut d);
        }
        DirectionScaling::PerBlock => {
            for b in blocks {
                let target = vecops::norm2(&center[b.clone()]);
                let have = vecops::norm2(&d[b.clone()]);
                let f = if have > 0.0 { target / have } else { 0.0 };
                vecops::scale(f, &mut d[b.clone()]);
            }
        }
    }
    d
}

/// Loss on a `resolution x resolution` grid spanning `[-half_width, half_width]`
/// along two seeded Gaussian directions through `center`. The middle cell
/// is evaluated at `center` itself.
pub fn landscape_slice(
    objective: &dyn Objective,
    center: &[f64],
    half_width: f64,
    resolution: usize,
    scaling: DirectionScaling,
    seed: u64,
) -> Result<LandscapeGrid, DiagnosticsError> {
    if resolution < 3 || resolution.is_multiple_of(2) {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "resolution must be odd and >= 3, got {resolution}"
        )));
    }
    if !(half_width >= 0.0 && half_width.is_finite()) {
        return Err(DiagnosticsError::InvalidArgument("half_width must be finite and >= 0".into()));
    }
    let blocks = objective.blocks();
    let u = random_direction(center, &blocks, scaling, seed, 0);
    let v = random_direction(center, &blocks, scaling, seed, 1);
    let half = (resolution / 2) as i64;
    // Integer numerators keep the middle coordinate exactly 0.
    let axis: Vec<f64> = (-half..=half).map(|k| half_width * k as f64 / half as f64).collect();

    let losses = axis
        .par_iter()
        .map(|&a| {
            axis.iter()
                .map(|&b| {
                    if a == 0.0 && b == 0.0 {
                        return objective.loss(center);
                    }
                    let p: Vec<f64> = center
                        .iter()
                        .zip(&u)
                        .zip(&v)
                        .map(|((c, du), dv)| c + a * du + b * dv)
                        .collect();
                    objective.loss(&p)
                })
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LandscapeGrid {
        center: center.to_vec(),
        direction_u: u,
        direction_v: v,
        axis,
        losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessPoint {
    pub radius: f64,
    pub mean_loss_increase: f64,
}

/// Mean of `loss(params + r d) - loss(params)` over `trials` unit Gaussian
/// directions `d`, for each radius. Directions are shared across radii and
/// each is used with both signs, so the estimate is a pure function of the
/// seed and is non-decreasing in `r` for convex losses.
pub fn perturbation_robustness(
    objective: &dyn Objective,
    params: &[f64],
    radii: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<RobustnessPoint>, DiagnosticsError> {
    if trials == 0 {
        return Err(DiagnosticsError::InvalidArgument("trials must be >= 1".into()));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(DiagnosticsError::InvalidArgument("radii must be finite and >= 0".into()));
    }
    let base = objective.loss(params)?;
    let directions: Vec<ParamVector> = (0..trials)
        .map(|t| random_direction(params, &[], DirectionScaling::Unit, seed, 2 + t as u64))
        .collect();
    radii
        .iter()
        .map(|&r| {
            if r == 0.0 {
                return Ok(RobustnessPoint {
                    radius: r,
                    mean_loss_increase: 0.0,
                });
            }
            let sum = directions
                .par_iter()
                .map(|d| {
                    let mut plus = params.to_vec();
                    let mut minus = params.to_vec();
                    vecops::axpy(r, d, &mut plus);
                    vecops::axpy(-r, d, &mut minus);
                    Ok(0.5 * (objective.loss(&plus)? + objective.loss(&minus)?) - base)
                })
                .collect::<Result<Vec<f64>, ModelError>>()?
                .iter()
                .sum::<f64>();
            Ok(RobustnessPoint {
                radius: r,
                mean_loss_increase: sum / trials as f64,
            })
        })
        .collect()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_histogram_csv<W: Write>(w: W, h: &Histogram) -> Result<(), DiagnosticsError> {
    let mut w = csv_writer(w);
    w.write_record(["bin_low", "bin_high", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_series_csv<W: Write>(w: W, series: &[(u64, f64)]) -> Result<(), DiagnosticsError> {
    let mut w = csv_writer(w);
    w.write_record(["round", "mean_pre_clip_norm"])?;
    for (t, v) in series {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_landscape_csv<W: Write>(w: W, g: &LandscapeGrid) -> Result<(), DiagnosticsError> {
    let mut w = csv_writer(w);
    w.write_record(["a", "b", "loss"])?;
    for (a, b, l) in g.cells() {
        w.write_record([a.to_string(), b.to_string(), l.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_robustness_csv<W: Write>(w: W, points: &[RobustnessPoint]) -> Result<(), DiagnosticsError> {
    let mut w = csv_writer(w);
    w.write_record(["radius", "mean_loss_increase"])?;
    for p in points {
        w.write_record([p.radius.to_string(), p.mean_loss_increase.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Lists the files a command produced, relative to its output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    pub path: PathBuf,
}

impl ArtifactManifest {
    pub fn push(&mut self, kind: &str, path: impl Into<PathBuf>) {
        self.artifacts.push(Artifact {
            kind: kind.into(),
            path: path.into(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuadraticBowl;

    fn record(round: u64, norms: &[f64]) -> RoundRecord {
        RoundRecord {
            round,
            sampled_clients: (0..norms.len()).collect(),
            pre_clip_norms: norms.to_vec(),
            clip_factors: vec![1.0; norms.len()],
            mean_clip_factor: 1.0,
            clip_deviation: 0.0,
            mean_local_loss: 0.0,
            epsilon: None,
            train: None,
            test: None,
        }
    }

    #[test]
    fn histogram_counts() {
        let recs = [record(0, &[2.0, 2.0]), record(1, &[2.0])];
        let h = norm_histogram(&recs, 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.edges.len(), 6);

        let recs = [record(0, &[0.1, 0.5, 0.9]), record(1, &[0.3, 1.0])];
        assert_eq!(norm_histogram(&recs, 1).unwrap().counts, vec![5]);
        let h = norm_histogram(&recs, 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert_eq!(*h.counts.last().unwrap(), 2);
        assert!(norm_histogram(&[], 3).is_err());
    }

    #[test]
    fn series() {
        let recs = [record(0, &[1.0, 3.0]), record(1, &[0.0, 0.0])];
        assert_eq!(average_norm_series(&recs).unwrap(), vec![(0, 2.0), (1, 0.0)]);
        assert_eq!(time_averaged_norm(&recs).unwrap(), 1.0);
    }

    #[test]
    fn landscape_basics() {
        let bowl = QuadraticBowl {
            curvature: vec![1.0, 2.0, 0.5, 4.0],
            minimum: vec![0.3, -0.2, 0.0, 1.0],
        };
        let c = [1.0, 0.5, -0.5, 0.2];
        let g = landscape_slice(&bowl, &c, 0.0, 5, DirectionScaling::PerBlock, 3).unwrap();
        let c_loss = bowl.loss(&c).unwrap();
        assert!(g.losses.iter().flatten().all(|&l| l == c_loss));
        let g = landscape_slice(&bowl, &c, 1.0, 7, DirectionScaling::Unit, 3).unwrap();
        assert_eq!(g.center_loss(), c_loss);
        assert_eq!(g.axis[3], 0.0);
        assert_eq!((g.axis[0], g.axis[6]), (-1.0, 1.0));
        assert!((vecops::norm2(&g.direction_u) - 1.0).abs() < 1e-12);
        let g = landscape_slice(&bowl, &c, 1.0, 3, DirectionScaling::PerBlock, 3).unwrap();
        assert!((vecops::norm2(&g.direction_v) - vecops::norm2(&c)).abs() < 1e-12);
        assert!(landscape_slice(&bowl, &c, 1.0, 4, DirectionScaling::Unit, 3).is_err());
        assert!(landscape_slice(&bowl, &c, 1.0, 1, DirectionScaling::Unit, 3).is_err());
    }

    #[test]
    fn robustness_on_convex_bowl() {
        let bowl = QuadraticBowl::isotropic(10);
        let p = vec![0.3; 10];
        let radii = [0.0, 0.05, 0.1, 0.5, 1.0, 2.0];
        let pts = perturbation_robustness(&bowl, &p, &radii, 8, 4).unwrap();
        assert_eq!(pts[0].mean_loss_increase, 0.0);
        assert!(pts.windows(2).all(|w| w[1].mean_loss_increase >= w[0].mean_loss_increase));
        // Isotropic bowl: the antithetic increase is exactly r^2 / 2.
        for q in &pts {
            assert!((q.mean_loss_increase - q.radius * q.radius / 2.0).abs() < 1e-12);
        }
        assert_eq!(pts, perturbation_robustness(&bowl, &p, &radii, 8, 4).unwrap());
    }
}
