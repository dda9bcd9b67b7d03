//! Empirical sample complexity: T_eps search, dimension/precision sweeps,
//! and rate-in-horizon scans.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{run_ensemble, ExperimentConfig};
use crate::error::{Result, ZoError};
use crate::linalg::{linear_fit, LinearFit};
use crate::optimizer::{Budget, Mode, RunOptions, Schedule, Setting};
use crate::problems::Problem;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TEpsSearch {
    pub t_eps: Option<usize>,
    /// No horizon up to the cap reached the target.
    pub censored: bool,
    /// Every (T, metric) pair evaluated, in evaluation order.
    pub evaluations: Vec<(usize, f64)>,
}

/// Smallest `T` with `metric(T) <= epsilon`: doubling from `T = 1` up to
/// `max_horizon`, then one bisection step between the last failing and the
/// first passing power of two. Non-finite metrics count as failures.
pub fn search_t_eps<F>(mut metric: F, epsilon: f64, max_horizon: usize) -> Result<TEpsSearch>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut evaluations = Vec::new();
    let mut ok = |t: usize, evals: &mut Vec<(usize, f64)>| -> Result<bool> {
        let m = metric(t)?;
        evals.push((t, m));
        Ok(m.is_finite() && m <= epsilon)
    };
    let mut t = 1usize;
    let mut last_fail = 0usize;
    loop {
        if t > max_horizon {
            return Ok(TEpsSearch {
                t_eps: None,
                censored: true,
                evaluations,
            });
        }
        if ok(t, &mut evaluations)? {
            break;
        }
        last_fail = t;
        t *= 2;
    }
    let mid = (last_fail + t) / 2;
    let t_eps = if last_fail > 0 && mid > last_fail && mid < t && ok(mid, &mut evaluations)? {
        mid
    } else {
        t
    };
    Ok(TEpsSearch {
        t_eps: Some(t_eps),
        censored: false,
        evaluations,
    })
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than
/// two points.
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Some(linear_fit(&lx, &ly))
}

fn budget_for(setting: Setting, horizon: usize, epsilon: f64) -> Budget {
    if setting.takes_horizon() {
        Budget::Horizon(horizon)
    } else {
        Budget::PrecisionWithHorizon { epsilon, horizon }
    }
}

/// Seed-averaged final metric; diverged runs make it infinite.
pub fn ensemble_metric(
    problem: &Problem,
    schedule: &Schedule,
    seeds: &[u64],
    mode: Mode,
    estimator: &str,
) -> Result<f64> {
    let opts = RunOptions {
        estimator: estimator.to_string(),
        row_stride: schedule.horizon.max(1),
        ..Default::default()
    };
    let records = run_ensemble(problem, schedule, seeds, mode, &opts)?;
    if records.iter().any(|r| r.summary.diverged) {
        return Ok(f64::INFINITY);
    }
    Ok(records.iter().map(|r| r.summary.final_metric).sum::<f64>() / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Dimension,
    Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub epsilon: f64,
    #[serde(rename = "T_eps")]
    pub t_eps: Option<usize>,
    pub censored: bool,
    pub evaluations: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub problem: String,
    pub setting: Setting,
    pub rows: Vec<SweepRow>,
    /// Log-log fit of T_eps against d (or eps) over uncensored rows.
    pub fit: Option<LinearFit>,
}

fn check_span(values: &[f64], what: &str) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    if values.len() < 3 || lo.is_nan() || lo <= 0.0 || hi / lo < 8.0 {
        return Err(ZoError::Parameter(format!(
            "{what} needs at least 3 positive values spanning a factor of 8"
        )));
    }
    Ok(())
}

fn sweep_cell(cfg: &ExperimentConfig, d: usize, epsilon: f64) -> Result<SweepRow> {
    let problem = cfg.build_problem(d)?;
    let search = search_t_eps(
        |t| {
            let schedule = cfg.schedule(&problem, budget_for(cfg.setting, t, epsilon))?;
            ensemble_metric(&problem, &schedule, &cfg.seeds, cfg.mode(), &cfg.estimator)
        },
        epsilon,
        cfg.max_horizon,
    )?;
    Ok(SweepRow {
        d,
        epsilon,
        t_eps: search.t_eps,
        censored: search.censored,
        evaluations: search.evaluations,
    })
}

fn finish(cfg: &ExperimentConfig, kind: SweepKind, rows: Vec<SweepRow>) -> SweepResult {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| {
            let t = r.t_eps? as f64;
            let x = match kind {
                SweepKind::Dimension => r.d as f64,
                SweepKind::Precision => r.epsilon,
            };
            Some((x, t))
        })
        .unzip();
    SweepResult {
        kind,
        problem: cfg.problem.clone(),
        setting: cfg.setting,
        rows,
        fit: power_law_fit(&x, &y),
    }
}

/// T_eps at fixed `cfg.eps` for each dimension in `ds`.
pub fn sweep_dimension(cfg: &ExperimentConfig, ds: &[usize]) -> Result<SweepResult> {
    cfg.validate()?;
    let eps = cfg
        .eps
        .ok_or_else(|| ZoError::Parameter("the dimension sweep needs eps".into()))?;
    check_span(&ds.iter().map(|&d| d as f64).collect::<Vec<_>>(), "d_sweep")?;
    let rows = ds
        .par_iter()
        .map(|&d| sweep_cell(cfg, d, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(cfg, SweepKind::Dimension, rows))
}

/// T_eps at fixed `cfg.d` for each precision in `eps_list`.
pub fn sweep_precision(cfg: &ExperimentConfig, eps_list: &[f64]) -> Result<SweepResult> {
    cfg.validate()?;
    check_span(eps_list, "eps_list")?;
    let rows = eps_list
        .par_iter()
        .map(|&e| sweep_cell(cfg, cfg.d, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(cfg, SweepKind::Precision, rows))
}

/// `sweep.csv` (`d,epsilon,T_eps,censored`), `sweep.json`, and optionally
/// `sweep.gp`, a gnuplot script plotting the uncensored rows on log axes.
pub fn write_sweep(result: &SweepResult, dir: &Path, gnuplot: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    w.write_record(["d", "epsilon", "T_eps", "censored"])?;
    for r in &result.rows {
        w.write_record([
            r.d.to_string(),
            r.epsilon.to_string(),
            r.t_eps.map_or_else(String::new, |t| t.to_string()),
            r.censored.to_string(),
        ])?;
    }
    w.flush()?;
    fs::write(
        dir.join("sweep.json"),
        serde_json::to_string_pretty(result)?,
    )?;
    if gnuplot {
        let (col, label) = match result.kind {
            SweepKind::Dimension => (1, "d"),
            SweepKind::Precision => (2, "epsilon"),
        };
        let mut f = fs::File::create(dir.join("sweep.gp"))?;
        writeln!(f, "set datafile separator ','")?;
        writeln!(f, "set logscale xy")?;
        writeln!(f, "set xlabel '{label}'")?;
        writeln!(f, "set ylabel 'T_eps'")?;
        writeln!(
            f,
            "plot 'sweep.csv' every ::1 using {col}:(strcol(4) eq 'false' ? $3 : 1/0) with linespoints title '{}'",
            result.setting
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonScan {
    pub horizons: Vec<usize>,
    pub mean_metric: Vec<f64>,
    /// Slope of log metric against log T.
    pub fit: Option<LinearFit>,
}

/// Seed-averaged metric at each horizon, with the schedule rebuilt for
/// each `T`.
pub fn horizon_scan(cfg: &ExperimentConfig, horizons: &[usize]) -> Result<HorizonScan> {
    cfg.validate()?;
    if !cfg.setting.takes_horizon() {
        return Err(ZoError::Parameter(format!(
            "setting {} is parameterized by eps",
            cfg.setting
        )));
    }
    let problem = cfg.build_problem(cfg.d)?;
    let mean_metric = horizons
        .iter()
        .map(|&t| {
            let s = cfg.schedule(&problem, Budget::Horizon(t))?;
            ensemble_metric(&problem, &s, &cfg.seeds, cfg.mode(), &cfg.estimator)
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = horizons.iter().map(|&t| t as f64).collect();
    Ok(HorizonScan {
        horizons: horizons.to_vec(),
        fit: power_law_fit(&x, &mean_metric),
        mean_metric,
    })
}
