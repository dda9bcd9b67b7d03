//! Flat JSON experiment configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::C0Cache;
use crate::error::{Result, ZoError};
use crate::estimators::EstimatorRegistry;
use crate::optimizer::{make_schedule, Budget, Mode, RunOptions, Schedule, Setting};
use crate::problems::{Problem, ProblemParams, ProblemRegistry, RowMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub d: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub temperature: f64,
    pub m: usize,
    pub rows: RowMode,
    pub data_seed: u64,
    pub value: f64,
    /// Additive value-noise level; required by stochastic settings unless the
    /// problem carries its own oracle.
    pub sigma0: Option<f64>,
    pub estimator: String,
    pub setting: Setting,
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    pub eps: Option<f64>,
    pub seeds: Vec<u64>,
    pub d_sweep: Option<Vec<usize>>,
    pub eps_list: Option<Vec<f64>>,
    pub out: PathBuf,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub c0: Option<f64>,
    pub c0_cache: Option<PathBuf>,
    pub row_stride: usize,
    /// Largest horizon tried by the T_eps search.
    pub max_horizon: usize,
    /// Multiplicative corrections of declared constants (`"L" -> 0.5`).
    pub scale_constants: BTreeMap<String, f64>,
    pub gnuplot: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = ProblemParams::default();
        Self {
            problem: "norm".into(),
            d: p.d,
            mu: p.mu,
            l: p.l,
            temperature: p.temperature,
            m: p.m,
            rows: p.rows,
            data_seed: p.data_seed,
            value: p.value,
            sigma0: None,
            estimator: "residual".into(),
            setting: Setting::DetNonsmoothCvx,
            horizon: None,
            eps: None,
            seeds: vec![0],
            d_sweep: None,
            eps_list: None,
            out: PathBuf::from("out"),
            eta: None,
            alpha: None,
            c0: None,
            c0_cache: None,
            row_stride: 1,
            max_horizon: 1 << 24,
            scale_constants: BTreeMap::new(),
            gnuplot: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn problem_params(&self, d: usize) -> ProblemParams {
        ProblemParams {
            d,
            mu: self.mu,
            l: self.l,
            temperature: self.temperature,
            m: self.m,
            rows: self.rows,
            data_seed: self.data_seed,
            value: self.value,
            sigma0: self.sigma0,
        }
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(ZoError::Parameter("seeds must not be empty".into()));
        }
        if self.row_stride == 0 {
            return Err(ZoError::Parameter("row_stride must be positive".into()));
        }
        EstimatorRegistry::default().create(&self.estimator)?;
        if !ProblemRegistry::default()
            .ids()
            .any(|id| id == self.problem)
        {
            return Err(ZoError::UnknownId {
                kind: "problem",
                id: self.problem.clone(),
            });
        }
        for (name, factor) in &self.scale_constants {
            if !(factor.is_finite() && *factor > 0.0) {
                return Err(ZoError::Parameter(format!(
                    "scale factor for {name} must be positive (got {factor})"
                )));
            }
        }
        Ok(())
    }

    /// The single-run budget: horizon settings take exactly one of T and
    /// eps; precision settings need eps and accept T as an override.
    pub fn run_budget(&self) -> Result<Budget> {
        match (self.setting.takes_horizon(), self.horizon, self.eps) {
            (true, Some(t), None) => Ok(Budget::Horizon(t)),
            (true, None, Some(e)) => Ok(Budget::Precision(e)),
            (true, Some(_), Some(_)) => Err(ZoError::Parameter(format!(
                "setting {} takes exactly one of T and eps",
                self.setting
            ))),
            (_, None, None) => Err(ZoError::Parameter(format!(
                "setting {} needs {}",
                self.setting,
                if self.setting.takes_horizon() {
                    "T or eps"
                } else {
                    "eps"
                }
            ))),
            (false, None, Some(e)) => Ok(Budget::Precision(e)),
            (false, Some(t), Some(e)) => Ok(Budget::PrecisionWithHorizon {
                epsilon: e,
                horizon: t,
            }),
            (false, Some(_), None) => Err(ZoError::Parameter(format!(
                "setting {} is parameterized by eps",
                self.setting
            ))),
        }
    }

    pub fn mode(&self) -> Mode {
        if self.setting.is_stochastic() {
            Mode::Stochastic
        } else {
            Mode::Deterministic
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            estimator: self.estimator.clone(),
            row_stride: self.row_stride,
            ..Default::default()
        }
    }

    /// Build the configured problem at dimension `d`, with constant
    /// corrections applied.
    pub fn build_problem(&self, d: usize) -> Result<Problem> {
        let mut p = ProblemRegistry::default().build(&self.problem, &self.problem_params(d))?;
        for (name, factor) in &self.scale_constants {
            p.constants.scale(name, *factor)?;
        }
        Ok(p)
    }

    /// Explicit c0, else the cache entry for (problem, d), else `None`.
    pub fn resolve_c0(&self, problem: &Problem) -> Result<Option<f64>> {
        if self.c0.is_some() {
            return Ok(self.c0);
        }
        match &self.c0_cache {
            Some(path) if path.exists() => {
                Ok(C0Cache::load(path)?.get(problem.id(), problem.dim()))
            }
            _ => Ok(None),
        }
    }

    /// Schedule for `problem` under `budget`, with explicit (eta, alpha)
    /// overrides applied.
    pub fn schedule(&self, problem: &Problem, budget: Budget) -> Result<Schedule> {
        let c0 = self.resolve_c0(problem)?;
        make_schedule(self.setting, problem, budget, problem.start(), c0)?
            .with_overrides(self.eta, self.alpha, None)
    }
}
