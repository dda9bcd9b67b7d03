//! Seed ensembles, T_eps sweeps and diagnostic suites.
//!
//! Output files written by [`run_experiment`]:
//! - `run_<seed>.csv`: columns `t,f_value,f_gap,grad_norm_sq,est_norm_sq,eta,alpha`
//! - `run_<seed>.json`: the run summary
//! - `summary.json`: an [`Aggregate`] over all seeds

mod config;
mod phase;
mod suites;
mod sweep;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use config::ExperimentConfig;
pub use phase::{
    fit_linear_phase, mean_gap_curve, stochastic_variance_excess, GapCurve, LinearPhase,
    NoiseExcess,
};
pub use suites::{run_suite, DiagnoseOptions, Suite, SuiteOutcome};
pub use sweep::{
    ensemble_metric, horizon_scan, power_law_fit, search_t_eps, sweep_dimension, sweep_precision,
    write_sweep, HorizonScan, SweepKind, SweepResult, SweepRow, TEpsSearch,
};

use crate::error::{Result, ZoError};
use crate::optimizer::{run, Metric, Mode, RunOptions, RunRecord, RunSummary, Schedule, Setting};
use crate::problems::Problem;

/// Run one seed; a diverged run is returned with `summary.diverged` set.
pub fn run_seed(
    problem: &Problem,
    schedule: &Schedule,
    seed: u64,
    mode: Mode,
    opts: &RunOptions,
) -> Result<RunRecord> {
    match run(problem, schedule, seed, mode, opts) {
        Err(ZoError::Diverged(record)) => Ok(*record),
        other => other,
    }
}

/// All seeds in parallel, results in seed order.
pub fn run_ensemble(
    problem: &Problem,
    schedule: &Schedule,
    seeds: &[u64],
    mode: Mode,
    opts: &RunOptions,
) -> Result<Vec<RunRecord>> {
    seeds
        .par_iter()
        .map(|&s| run_seed(problem, schedule, s, mode, opts))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub problem: String,
    pub d: usize,
    pub setting: Setting,
    pub estimator: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub eta: f64,
    pub alpha: f64,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    /// Fourth-moment constant the schedule was built with.
    pub c0: f64,
    pub metric: Metric,
    pub n_seeds: usize,
    pub n_diverged: usize,
    /// Mean and sample standard deviation of the final metric over the
    /// seeds that did not diverge.
    pub mean_final_metric: f64,
    pub std_final_metric: f64,
    pub warnings: Vec<String>,
    pub runs: Vec<RunSummary>,
}

pub fn aggregate(problem: &Problem, schedule: &Schedule, records: &[RunRecord]) -> Aggregate {
    let ok: Vec<f64> = records
        .iter()
        .filter(|r| !r.summary.diverged)
        .map(|r| r.summary.final_metric)
        .collect();
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let std = if ok.len() > 1 {
        (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Aggregate {
        problem: problem.id().to_string(),
        d: problem.dim(),
        setting: schedule.setting,
        estimator: records
            .first()
            .map_or_else(String::new, |r| r.summary.estimator.clone()),
        horizon: schedule.horizon,
        eta: schedule.eta,
        alpha: schedule.alpha,
        epsilon: schedule.epsilon,
        rho: schedule.rho,
        c0: schedule.c0,
        metric: schedule.metric,
        n_seeds: records.len(),
        n_diverged: records.len() - ok.len(),
        mean_final_metric: mean,
        std_final_metric: std,
        warnings: schedule.warnings.clone(),
        runs: records.iter().map(|r| r.summary.clone()).collect(),
    }
}

/// The `run` command: one ensemble, files under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Aggregate> {
    cfg.validate()?;
    let budget = cfg.run_budget()?;
    let problem = cfg.build_problem(cfg.d)?;
    let schedule = cfg.schedule(&problem, budget)?;
    let records = run_ensemble(
        &problem,
        &schedule,
        &cfg.seeds,
        cfg.mode(),
        &cfg.run_options(),
    )?;
    let agg = aggregate(&problem, &schedule, &records);
    write_run_files(&cfg.out, &records, &agg)?;
    Ok(agg)
}

pub fn write_run_files(dir: &Path, records: &[RunRecord], agg: &Aggregate) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in records {
        let seed = r.summary.seed;
        r.save_csv(dir.join(format!("run_{seed}.csv")))?;
        fs::write(dir.join(format!("run_{seed}.json")), r.summary_json()?)?;
    }
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(agg)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("zo-exp-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn run_writes_files_and_is_deterministic() {
        let out = tmp("det");
        let cfg = ExperimentConfig {
            horizon: Some(500),
            seeds: vec![7, 8],
            out: out.clone(),
            ..Default::default()
        };
        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.n_seeds, 2);
        assert!(agg.mean_final_metric > 0.0);
        let first = fs::read(out.join("run_7.csv")).unwrap();
        run_experiment(&cfg).unwrap();
        assert_eq!(first, fs::read(out.join("run_7.csv")).unwrap());
        assert!(out.join("summary.json").exists());
        assert!(out.join("run_8.json").exists());
        fs::remove_dir_all(out).unwrap();
    }

    #[test]
    fn diverged_runs_are_flagged_not_fatal() {
        let cfg = ExperimentConfig {
            problem: "quadratic".into(),
            horizon: Some(200),
            eta: Some(5.0),
            seeds: vec![1, 2, 3],
            out: tmp("div"),
            ..Default::default()
        };
        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.n_diverged, 3);
        fs::remove_dir_all(&cfg.out).unwrap();
    }
}
