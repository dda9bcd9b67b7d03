//! Plain descent `x_{t+1} = x_t - eta g_t` driven by a gradient estimator,
//! with the per-setting schedules in [`schedule`].
//!
//! Streams: a run with seed `s` draws directions from
//! `RandomStream::new(s).split(0)` and oracle noise from `.split(1)`, so a
//! stochastic run with zero noise retraces the deterministic run exactly.

mod record;
mod schedule;

pub use record::{RunRecord, RunRow, RunSummary, Trace, CSV_HEADER};
pub use schedule::{
    eta_cap, make_schedule, Averaging, Budget, Metric, Schedule, Setting, DEFAULT_C0, MAX_HORIZON,
};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZoError};
use crate::estimators::{EstimatorRegistry, Oracle};
use crate::linalg::{axpy, is_finite, norm, norm_sq};
use crate::problems::Problem;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub estimator: String,
    /// Record every `row_stride`-th iteration (plus the first and last).
    pub row_stride: usize,
    pub keep_trace: bool,
    /// Start point; the problem's default when `None`.
    pub x1: Option<Vec<f64>>,
    /// Abort once `||x_t||` exceeds this multiple of `max(||x_1||, 1)`.
    pub divergence_factor: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            estimator: "residual".into(),
            row_stride: 1,
            keep_trace: false,
            x1: None,
            divergence_factor: 1e6,
        }
    }
}

pub fn direction_stream(seed: u64) -> RandomStream {
    RandomStream::new(seed).split(0)
}

pub fn noise_stream(seed: u64) -> RandomStream {
    RandomStream::new(seed).split(1)
}

/// Deterministic oracle, residual estimator, default options.
pub fn run_deterministic(problem: &Problem, schedule: &Schedule, seed: u64) -> Result<RunRecord> {
    run(
        problem,
        schedule,
        seed,
        Mode::Deterministic,
        &RunOptions::default(),
    )
}

/// Stochastic oracle (fresh sample per query), residual estimator.
pub fn run_stochastic(problem: &Problem, schedule: &Schedule, seed: u64) -> Result<RunRecord> {
    run(
        problem,
        schedule,
        seed,
        Mode::Stochastic,
        &RunOptions::default(),
    )
}

/// Running weighted mean using `r_t = sum_{s<=t} w_s / w_t = 1 + rho r_{t-1}`,
/// which stays bounded for `w_t = rho^{-t}`.
struct WeightedMean {
    rho: f64,
    r: f64,
    mean: Vec<f64>,
}

impl WeightedMean {
    fn new(rho: f64, d: usize) -> Self {
        Self {
            rho,
            r: 0.0,
            mean: vec![0.0; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.r = 1.0 + self.rho * self.r;
        let k = 1.0 / self.r;
        self.mean
            .iter_mut()
            .zip(x)
            .for_each(|(m, xi)| *m += k * (xi - *m));
    }
}

pub fn run(
    problem: &Problem,
    schedule: &Schedule,
    seed: u64,
    mode: Mode,
    opts: &RunOptions,
) -> Result<RunRecord> {
    schedule.validate()?;
    let d = problem.dim();
    let x1 = opts.x1.clone().unwrap_or_else(|| problem.start().to_vec());
    if x1.len() != d {
        return Err(ZoError::Size(format!(
            "x1 has length {}, expected {d}",
            x1.len()
        )));
    }
    let stride = opts.row_stride.max(1);
    let (eta, alpha, horizon) = (schedule.eta, schedule.alpha, schedule.horizon);

    let mut dirs = direction_stream(seed);
    let mut oracle = match mode {
        Mode::Deterministic => Oracle::deterministic(problem),
        Mode::Stochastic => Oracle::stochastic(problem, noise_stream(seed))?,
    };
    let mut est = EstimatorRegistry::default().create(&opts.estimator)?;

    let mut x = x1.clone();
    if est.state().is_some() {
        // x_0 = x_1: store f(x_1 + alpha u_0); g_0 = 0
        est.estimate(&mut oracle, &x, alpha, &mut dirs)?;
    }

    let f_star = problem.constants.f_star.unwrap_or(0.0);
    let limit = opts.divergence_factor * norm(&x1).max(1.0);
    let mut rows = Vec::with_capacity(horizon / stride + 2);
    let mut trace = opts.keep_trace.then(Trace::default);
    let mut sum_gap = 0.0;
    let mut sum_grad = 0.0;
    let mut uniform = WeightedMean::new(1.0, d);
    let mut weighted = schedule.rho.map(|rho| WeightedMean::new(rho, d));
    let mut exited_box = false;
    let mut diverged = false;
    let mut steps = 0;

    for t in 1..=horizon {
        let fx = problem.value(&x);
        let gap = fx - f_star;
        let gn = norm_sq(&problem.gradient(&x));
        sum_gap += gap;
        sum_grad += gn;
        uniform.push(&x);
        if let Some(w) = weighted.as_mut() {
            w.push(&x);
        }
        exited_box |= !problem.in_box(&x);

        let prev = est.state().map_or(f64::NAN, |s| s.prev_value);
        let g = est.estimate(&mut oracle, &x, alpha, &mut dirs)?;
        let en = norm_sq(&g.vector);
        if let Some(tr) = trace.as_mut() {
            tr.points.push(x.clone());
            tr.prev_values.push(prev);
            tr.est_norm_sq.push(en);
        }
        axpy(&mut x, -eta, &g.vector);
        steps = t;

        if t == 1 || t % stride == 0 || t == horizon {
            rows.push(RunRow {
                t,
                f_value: fx,
                f_gap: gap,
                grad_norm_sq: gn,
                est_norm_sq: en,
                eta,
                alpha,
            });
        }
        if !fx.is_finite() || !is_finite(&x) || norm(&x) > limit {
            diverged = true;
            break;
        }
    }
    if let Some(tr) = trace.as_mut() {
        tr.points.push(x.clone());
    }
    exited_box |= !problem.in_box(&x);

    let n = steps.max(1) as f64;
    let last_gap = problem.value(&x) - f_star;
    let averaged_point_gap = problem.value(&uniform.mean) - f_star;
    let weighted_point_gap = weighted.as_ref().map(|w| problem.value(&w.mean) - f_star);
    let mean_gap = sum_gap / n;
    let mean_grad_norm_sq = sum_grad / n;
    let final_metric = match schedule.metric {
        Metric::MeanGap => mean_gap,
        Metric::WeightedPointGap => weighted_point_gap.unwrap_or(averaged_point_gap),
        Metric::LastGap => last_gap,
        Metric::MeanGradNormSq => mean_grad_norm_sq,
    };
    let averaged_point = match schedule.averaging {
        Averaging::Last => x.clone(),
        Averaging::UniformMean => uniform.mean,
        Averaging::RhoWeighted => weighted.map_or_else(|| x.clone(), |w| w.mean),
    };

    let record = RunRecord {
        rows,
        summary: RunSummary {
            seed,
            setting: schedule.setting,
            estimator: opts.estimator.clone(),
            d,
            horizon,
            steps,
            queries: oracle.queries(),
            metric: schedule.metric,
            final_metric,
            diverged,
            exited_box,
            mean_gap,
            averaged_point_gap,
            weighted_point_gap,
            last_gap,
            mean_grad_norm_sq,
        },
        averaged_point,
        final_point: x,
        trace,
    };
    if diverged {
        Err(ZoError::Diverged(Box::new(record)))
    } else {
        Ok(record)
    }
}

/// `sum_t w_t x_t / sum_t w_t`, accumulated with weights scaled by their
/// maximum.
pub fn weighted_average(trajectory: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if trajectory.len() != weights.len() {
        return Err(ZoError::Size(format!(
            "{} points but {} weights",
            trajectory.len(),
            weights.len()
        )));
    }
    let first = trajectory
        .first()
        .ok_or_else(|| ZoError::Size("empty trajectory".into()))?;
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(ZoError::Parameter(
            "weights must be positive and finite".into(),
        ));
    }
    let wmax = weights.iter().copied().fold(0.0, f64::max);
    let mut acc = vec![0.0; first.len()];
    let mut total = 0.0;
    for (x, w) in trajectory.iter().zip(weights) {
        if x.len() != acc.len() {
            return Err(ZoError::Size("trajectory points differ in length".into()));
        }
        let w = w / wmax;
        axpy(&mut acc, w, x);
        total += w;
    }
    acc.iter_mut().for_each(|v| *v /= total);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{add_value_noise, make_constant_problem, make_quadratic_problem};

    #[test]
    fn weighted_average_examples() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0]];
        assert_eq!(weighted_average(&pts, &[1.0, 1.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(weighted_average(&pts[..1], &[5.0]).unwrap(), vec![1.0, 2.0]);
        let scalar = vec![vec![0.0], vec![4.0]];
        assert_eq!(weighted_average(&scalar, &[1.0, 3.0]).unwrap(), vec![3.0]);
        assert!(matches!(
            weighted_average(&pts, &[1.0]),
            Err(ZoError::Size(_))
        ));
    }

    #[test]
    fn online_weighted_mean_matches_direct_formula() {
        let rho: f64 = 0.9;
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), i as f64]).collect();
        let w: Vec<f64> = (1..=30).map(|t| rho.powi(-t)).collect();
        let direct = weighted_average(&pts, &w).unwrap();
        let mut online = WeightedMean::new(rho, 2);
        pts.iter().for_each(|p| online.push(p));
        for (a, b) in direct.iter().zip(&online.mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_problem_never_moves() {
        let p = make_constant_problem(3, 2.0).unwrap();
        let s = Schedule::manual(Setting::DetNonsmoothCvx, 0.5, 0.1, 50).unwrap();
        let rec = run_deterministic(&p, &s, 1).unwrap();
        assert_eq!(rec.final_point, p.start());
        assert_eq!(rec.summary.queries, 51);
    }

    #[test]
    fn stride_keeps_first_and_last_rows() {
        let p = make_quadratic_problem(2, 1.0, 2.0).unwrap();
        let s = Schedule::manual(Setting::DetNonsmoothCvx, 0.01, 0.1, 25).unwrap();
        let opts = RunOptions {
            row_stride: 10,
            ..Default::default()
        };
        let rec = run(&p, &s, 0, Mode::Deterministic, &opts).unwrap();
        let ts: Vec<usize> = rec.rows.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![1, 10, 20, 25]);
    }

    #[test]
    fn divergence_returns_partial_record() {
        let p = make_quadratic_problem(2, 1.0, 2.0).unwrap();
        let s = Schedule::manual(Setting::DetNonsmoothCvx, 1e3, 0.1, 10_000).unwrap();
        match run_deterministic(&p, &s, 3) {
            Err(ZoError::Diverged(rec)) => {
                assert!(rec.summary.diverged);
                assert!(rec.summary.steps < 10_000);
                assert!(rec.summary.exited_box);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_noise_matches_deterministic() {
        let p = make_quadratic_problem(3, 1.0, 2.0).unwrap();
        let noisy = add_value_noise(p.clone(), 0.0).unwrap();
        let s = Schedule::manual(Setting::StoSmoothCvx, 0.01, 0.1, 200).unwrap();
        let a = run_deterministic(&p, &s, 5).unwrap();
        let b = run_stochastic(&noisy, &s, 5).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.final_point, b.final_point);
    }
}
