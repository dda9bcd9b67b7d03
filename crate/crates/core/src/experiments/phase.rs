//! Gap-curve shape and noise-driven estimator variance.

use rayon::prelude::*;
use serde::Serialize;

use super::run_ensemble;
use crate::error::{Result, ZoError};
use crate::linalg::{linear_fit, LinearFit};
use crate::optimizer::{run, Mode, RunOptions, Schedule};
use crate::problems::{add_value_noise, Problem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCurve {
    pub t: Vec<usize>,
    pub mean_gap: Vec<f64>,
}

/// `f(x_t) - f*` averaged over seeds, sampled every `stride` steps.
pub fn mean_gap_curve(
    problem: &Problem,
    schedule: &Schedule,
    seeds: &[u64],
    mode: Mode,
    stride: usize,
) -> Result<GapCurve> {
    if seeds.is_empty() {
        return Err(ZoError::Parameter("seeds must not be empty".into()));
    }
    let opts = RunOptions {
        row_stride: stride,
        ..Default::default()
    };
    let records = run_ensemble(problem, schedule, seeds, mode, &opts)?;
    if let Some(r) = records.iter().find(|r| r.summary.diverged) {
        return Err(ZoError::Precondition(format!(
            "seed {} diverged; the curve is undefined",
            r.summary.seed
        )));
    }
    let t: Vec<usize> = records[0].rows.iter().map(|r| r.t).collect();
    let n = records.len() as f64;
    let mean_gap = (0..t.len())
        .map(|i| records.iter().map(|r| r.rows[i].f_gap).sum::<f64>() / n)
        .collect();
    Ok(GapCurve { t, mean_gap })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearPhase {
    /// Mean gap over the last `tail_fraction` of the curve.
    pub floor: f64,
    /// Points fitted: from the start until the gap first drops below
    /// `floor_factor * floor`.
    pub segment_end_t: usize,
    pub n_points: usize,
    /// Fit of `ln gap` against `t`; `-slope` is the empirical contraction rate.
    pub fit: LinearFit,
}

pub fn fit_linear_phase(
    curve: &GapCurve,
    tail_fraction: f64,
    floor_factor: f64,
) -> Result<LinearPhase> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(ZoError::Parameter(
            "tail_fraction must lie in (0, 1)".into(),
        ));
    }
    let n = curve.t.len();
    let tail = ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    let floor = curve.mean_gap[n - tail..].iter().sum::<f64>() / tail as f64;
    let end = curve
        .mean_gap
        .iter()
        .position(|&g| !(g >= floor_factor * floor && g > 0.0))
        .unwrap_or(n);
    if end < 3 {
        return Err(ZoError::Precondition(format!(
            "only {end} points above {floor_factor} x floor; record more rows"
        )));
    }
    let x: Vec<f64> = curve.t[..end].iter().map(|&t| t as f64).collect();
    let y: Vec<f64> = curve.mean_gap[..end].iter().map(|g| g.ln()).collect();
    Ok(LinearPhase {
        floor,
        segment_end_t: curve.t[end - 1],
        n_points: end,
        fit: linear_fit(&x, &y),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseExcess {
    pub sigma0: f64,
    /// Mean `||g_t||^2` over the second half of the runs.
    pub mean_est_norm_sq: f64,
    /// Same quantity with `sigma0 = 0` and the same seeds.
    pub baseline: f64,
    /// `(mean - baseline) alpha^2 / sigma0^2`.
    pub normalized_excess: f64,
}

/// Steady-state estimator second moment under value noise of each level in
/// `sigmas`, against the noiseless run with common seeds, using a fixed
/// (eta, alpha) on the stochastic path.
pub fn stochastic_variance_excess(
    base: &Problem,
    schedule: &Schedule,
    sigmas: &[f64],
    seeds: &[u64],
) -> Result<Vec<NoiseExcess>> {
    if seeds.is_empty() {
        return Err(ZoError::Parameter("seeds must not be empty".into()));
    }
    let alpha = schedule.alpha;
    let steady = |sigma: f64| -> Result<f64> {
        let p = add_value_noise(base.clone(), sigma)?;
        let per_seed = seeds
            .par_iter()
            .map(|&s| {
                let r = run(&p, schedule, s, Mode::Stochastic, &RunOptions::default())?;
                let half = &r.rows[r.rows.len() / 2..];
                Ok(half.iter().map(|row| row.est_norm_sq).sum::<f64>() / half.len() as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(per_seed.iter().sum::<f64>() / per_seed.len() as f64)
    };
    let baseline = steady(0.0)?;
    sigmas
        .iter()
        .map(|&sigma| {
            if sigma.is_nan() || sigma <= 0.0 {
                return Err(ZoError::Parameter(format!(
                    "noise levels must be positive (got {sigma})"
                )));
            }
            let m = steady(sigma)?;
            Ok(NoiseExcess {
                sigma0: sigma,
                mean_est_norm_sq: m,
                baseline,
                normalized_excess: (m - baseline) * alpha * alpha / (sigma * sigma),
            })
        })
        .collect()
}
