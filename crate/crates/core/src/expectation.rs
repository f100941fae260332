//! Relaxations and bounds of the expected-value objective.
//!
//! On a partition of the uncertainty box, the convex relaxation of
//! `E[g(p, w, x(tf, p, w))]` over `P` is the probability-weighted sum of the
//! per-cell convex terminal relaxations evaluated at the cell's conditional
//! mean, and likewise for the concave side.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Model;
use crate::interval::IntervalBox;
use crate::odeint::IntegratorConfig;
use crate::staterelax::{compute_state_bounds, terminal_relaxation, terminal_value, RelaxConfig, StateBoundTrajectory};
use crate::stochastics::Partition;

/// Relaxation of the expected value over a fixed `P` and partition, with
/// state bounds for every cell computed up front.
#[derive(Debug, Clone)]
pub struct ExpectedValueRelaxation<'a> {
    model: &'a Model,
    pbox: IntervalBox,
    partition: &'a Partition,
    cfg: RelaxConfig,
    cell_bounds: Vec<StateBoundTrajectory>,
}

impl<'a> ExpectedValueRelaxation<'a> {
    pub fn new(model: &'a Model, pbox: &IntervalBox, partition: &'a Partition, cfg: &RelaxConfig) -> Result<Self> {
        let cell_bounds = partition
            .cells()
            .par_iter()
            .map(|cell| compute_state_bounds(model, pbox, &cell.bounds, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            pbox: pbox.clone(),
            partition,
            cfg: *cfg,
            cell_bounds,
        })
    }

    pub fn pbox(&self) -> &IntervalBox {
        &self.pbox
    }

    pub fn partition(&self) -> &Partition {
        self.partition
    }

    pub fn cell_bounds(&self) -> &[StateBoundTrajectory] {
        &self.cell_bounds
    }

    /// Per-cell terminal relaxations `(cv, cc)` at `(p, E[w | cell])`.
    pub fn cell_terms(&self, p: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.partition
            .cells()
            .par_iter()
            .zip(self.cell_bounds.par_iter())
            .map(|(cell, bounds)| terminal_relaxation(self.model, p, &cell.mean, bounds, &self.cfg))
            .collect()
    }

    /// `(cv, cc)` of the expected value at `p`.
    pub fn evaluate(&self, p: &[f64]) -> Result<(f64, f64)> {
        let terms = self.cell_terms(p)?;
        let (mut cv, mut cc) = (0.0, 0.0);
        for (cell, (a, b)) in self.partition.cells().iter().zip(terms) {
            cv += cell.probability * a;
            cc += cell.probability * b;
        }
        Ok((cv, cc))
    }
}

/// One-shot relaxation value at `p`.
pub fn relax_expected_value(
    model: &Model,
    pbox: &IntervalBox,
    partition: &Partition,
    p: &[f64],
    cfg: &RelaxConfig,
) -> Result<(f64, f64)> {
    ExpectedValueRelaxation::new(model, pbox, partition, cfg)?.evaluate(p)
}

/// Compass search settings for the lower-bounding problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Initial step as a fraction of each box width.
    pub initial_step_fraction: f64,
    pub contraction: f64,
    /// Stop once every step is below this fraction of its box width.
    pub step_tolerance: f64,
    pub evaluation_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            initial_step_fraction: 0.25,
            contraction: 0.5,
            step_tolerance: 1e-4,
            evaluation_budget: 500,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v < 1.0;
        if !(self.initial_step_fraction > 0.0 && self.initial_step_fraction.is_finite())
            || !frac(self.contraction)
            || !frac(self.step_tolerance)
            || self.evaluation_budget == 0
        {
            return Err(Error::InvalidInput(format!("invalid search settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    /// Convex relaxation value at `argmin`.
    pub value: f64,
    pub argmin: Vec<f64>,
    pub evaluations: usize,
    /// Step lengths when the search stopped.
    pub final_step: Vec<f64>,
}

/// Minimizes the convex relaxation over `P` by compass search from the
/// midpoint. The result is the relaxation value at the incumbent, so it
/// overestimates the exact minimum by the residual search error.
pub fn minimize_relaxation(relax: &ExpectedValueRelaxation<'_>, search: &SearchConfig) -> Result<LowerBound> {
    search.validate()?;
    let pbox = relax.pbox();
    let widths = pbox.widths();
    let mut x = pbox.midpoint();
    let mut fx = relax.evaluate(&x)?.0;
    let mut evaluations = 1;
    let mut step: Vec<f64> = widths.iter().map(|w| w * search.initial_step_fraction).collect();
    let active: Vec<usize> = (0..widths.len()).filter(|&j| widths[j] > 0.0).collect();

    'search: loop {
        if active.iter().all(|&j| step[j] < search.step_tolerance * widths[j]) {
            break;
        }
        let mut improved = false;
        'poll: for &j in &active {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[j] = pbox[j].clamp(x[j] + dir * step[j]);
                if y[j] == x[j] {
                    continue;
                }
                if evaluations >= search.evaluation_budget {
                    break 'search;
                }
                let fy = relax.evaluate(&y)?.0;
                evaluations += 1;
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break 'poll;
                }
            }
        }
        if !improved {
            for s in &mut step {
                *s *= search.contraction;
            }
        }
    }
    Ok(LowerBound {
        value: fx,
        argmin: x,
        evaluations,
        final_step: step,
    })
}

/// Lower bound on `min_{p in P} E[g]` from the relaxation over `P`.
pub fn lower_bound(
    model: &Model,
    pbox: &IntervalBox,
    partition: &Partition,
    search: &SearchConfig,
    cfg: &RelaxConfig,
) -> Result<LowerBound> {
    let relax = ExpectedValueRelaxation::new(model, pbox, partition, cfg)?;
    minimize_relaxation(&relax, search)
}

/// Upper bound on `E[g]` at `p` from the relaxation over the degenerate box
/// `[p, p]`, with cell bounds computed afresh on that box.
pub fn upper_bound(model: &Model, p: &[f64], partition: &Partition, cfg: &RelaxConfig) -> Result<f64> {
    let point = IntervalBox::point(p)?;
    Ok(relax_expected_value(model, &point, partition, p, cfg)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub pbox: IntervalBox,
    pub lower: f64,
    pub upper: f64,
    pub minimizer_estimate: Vec<f64>,
    pub upper_point: Vec<f64>,
    pub partition_cells: usize,
    pub partition_counts: Vec<usize>,
    pub evaluations: usize,
    pub final_step: Vec<f64>,
    #[serde(flatten)]
    pub search: SearchConfig,
    pub lower_seconds: f64,
    pub upper_seconds: f64,
}

/// Lower bound over `P` and the upper bound at the search incumbent.
pub fn compute_bounds(
    model: &Model,
    pbox: &IntervalBox,
    partition: &Partition,
    search: &SearchConfig,
    cfg: &RelaxConfig,
) -> Result<BoundReport> {
    let start = Instant::now();
    let lb = lower_bound(model, pbox, partition, search, cfg)?;
    let lower_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let upper = upper_bound(model, &lb.argmin, partition, cfg)?;
    let upper_seconds = start.elapsed().as_secs_f64();
    Ok(BoundReport {
        pbox: pbox.clone(),
        lower: lb.value,
        upper,
        upper_point: lb.argmin.clone(),
        minimizer_estimate: lb.argmin,
        partition_cells: partition.len(),
        partition_counts: partition.counts().to_vec(),
        evaluations: lb.evaluations,
        final_step: lb.final_step,
        search: *search,
        lower_seconds,
        upper_seconds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaaEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

/// Sample-average estimate of `E[g]` at `p` from `n` simulated draws.
///
/// Draws come from one ChaCha8 stream seeded with `seed`, taken in sample
/// order, so results do not depend on the worker count.
pub fn saa_estimate(
    model: &Model,
    p: &[f64],
    n: usize,
    seed: u64,
    integrator: &IntegratorConfig,
) -> Result<SaaEstimate> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("sample count must be at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = model.dist.sample(&mut rng, n);
    let values: Vec<Result<f64>> = samples
        .par_iter()
        .map(|w| terminal_value(model, p, w, integrator))
        .collect();
    let failed = values.iter().filter(|v| v.is_err()).count();
    if failed > 0 {
        return Err(Error::SampleFailures(failed, n));
    }
    let values: Vec<f64> = values.into_iter().map(|v| v.unwrap()).collect();
    let (mean, stderr) = mean_and_stderr(&values);
    Ok(SaaEstimate { mean, stderr, n, seed })
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Tensor grid over `pbox` with `counts[j] >= 2` points per dimension, the
/// last dimension varying fastest. Endpoints are hit exactly.
pub fn grid_points(pbox: &IntervalBox, counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    if counts.len() != pbox.dim() {
        return Err(Error::Dimension(format!(
            "grid has {} counts for a {}-dimensional box",
            counts.len(),
            pbox.dim()
        )));
    }
    if let Some(&c) = counts.iter().find(|&&c| c < 2) {
        return Err(Error::InvalidInput(format!("grid counts must be at least 2, got {c}")));
    }
    let axes: Vec<Vec<f64>> = pbox
        .iter()
        .zip(counts)
        .map(|(iv, &c)| {
            (0..c)
                .map(|i| {
                    if i + 1 == c {
                        iv.hi()
                    } else {
                        iv.lo() + iv.width() * i as f64 / (c - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len()];
    for _ in 0..total {
        points.push(idx.iter().enumerate().map(|(j, &i)| axes[j][i]).collect());
        for j in (0..counts.len()).rev() {
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub p: Vec<f64>,
    pub gcv: f64,
    pub gcc: f64,
}

/// Relaxation values on a tensor grid over `P`.
pub fn relaxation_surface(
    model: &Model,
    pbox: &IntervalBox,
    partition: &Partition,
    grid: &[usize],
    cfg: &RelaxConfig,
) -> Result<Vec<SurfacePoint>> {
    let points = grid_points(pbox, grid)?;
    let relax = ExpectedValueRelaxation::new(model, pbox, partition, cfg)?;
    points
        .into_par_iter()
        .map(|p| {
            let (gcv, gcc) = relax.evaluate(&p)?;
            Ok(SurfacePoint { p, gcv, gcc })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaaPoint {
    pub p: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

/// SAA estimates on a tensor grid; every point reuses the same draws.
pub fn saa_surface(
    model: &Model,
    pbox: &IntervalBox,
    grid: &[usize],
    n: usize,
    seed: u64,
    integrator: &IntegratorConfig,
) -> Result<Vec<SaaPoint>> {
    grid_points(pbox, grid)?
        .into_iter()
        .map(|p| {
            let est = saa_estimate(model, &p, n, seed, integrator)?;
            Ok(SaaPoint {
                p,
                mean: est.mean,
                stderr: est.stderr,
            })
        })
        .collect()
}
