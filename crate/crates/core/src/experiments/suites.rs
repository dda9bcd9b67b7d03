//! Named collections of diagnostic checks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::diagnostics::{
    check_ball_moment, check_declared_constants, check_estimator_contrasts, check_proposition1,
    check_residual_unbiased, check_sphere_moment, check_variance_nonsmooth, check_variance_smooth,
    contexts_from_trace, estimate_c0, C0Estimate, VarianceRow,
};
use crate::error::{Result, ZoError};
use crate::optimizer::{make_schedule, run, Budget, Mode, RunOptions, Schedule, Setting};
use crate::problems::{
    add_value_noise, make_constant_problem, make_least_squares, make_logsumexp_problem,
    make_nonconvex_problem, make_norm_problem, make_quadratic_problem, Problem, RowMode,
};
use crate::report::BoundCheckReport;
use crate::rng::RandomStream;
use crate::smoothing::{box_pairs, box_probes, SmoothedSurrogate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Moments,
    Smoothing,
    Variance,
    Proposition1,
    All,
}

impl Suite {
    pub fn id(self) -> &'static str {
        match self {
            Suite::Moments => "moments",
            Suite::Smoothing => "smoothing",
            Suite::Variance => "variance",
            Suite::Proposition1 => "proposition1",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Suite {
    type Err = ZoError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Suite::Moments,
            Suite::Smoothing,
            Suite::Variance,
            Suite::Proposition1,
            Suite::All,
        ]
        .into_iter()
        .find(|x| x.id() == s)
        .ok_or_else(|| ZoError::UnknownId {
            kind: "suite",
            id: s.to_string(),
        })
    }
}

/// Monte Carlo budgets and constant corrections for a suite run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    pub seed: u64,
    /// Applied to every suite problem that declares the named constant.
    pub scale_constants: BTreeMap<String, f64>,
    pub n_moment: usize,
    pub n_value: usize,
    pub n_grad: usize,
    pub n_probes: usize,
    pub n_resample: usize,
    pub n_unbiased: usize,
    pub n_c0: usize,
    pub variance_horizon: usize,
    pub n_contrast: usize,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            scale_constants: BTreeMap::new(),
            n_moment: 1_000_000,
            n_value: 100_000,
            n_grad: 200_000,
            n_probes: 20,
            n_resample: 20_000,
            n_unbiased: 1_000_000,
            n_c0: 200_000,
            variance_horizon: 200,
            n_contrast: 200_000,
        }
    }
}

impl DiagnoseOptions {
    /// Reduced budgets for smoke tests.
    pub fn quick() -> Self {
        Self {
            n_moment: 50_000,
            n_value: 5_000,
            n_grad: 5_000,
            n_probes: 4,
            n_resample: 2_000,
            n_unbiased: 50_000,
            n_c0: 20_000,
            variance_horizon: 20,
            n_contrast: 20_000,
            ..Default::default()
        }
    }

    fn prepare(&self, mut p: Problem) -> Result<Problem> {
        for (name, factor) in &self.scale_constants {
            match p.constants.scale(name, *factor) {
                Ok(()) | Err(ZoError::MissingConstant(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub passed: bool,
    pub reports: Vec<BoundCheckReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub c0: Vec<C0Estimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub variance_table: Vec<VarianceRow>,
}

pub fn run_suite(suite: Suite, opts: &DiagnoseOptions) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome {
        suite,
        passed: true,
        reports: vec![],
        c0: vec![],
        variance_table: vec![],
    };
    let root = RandomStream::new(opts.seed);
    let parts: &[Suite] = match suite {
        Suite::All => &[
            Suite::Moments,
            Suite::Smoothing,
            Suite::Variance,
            Suite::Proposition1,
        ],
        _ => std::slice::from_ref(&suite),
    };
    for (i, part) in parts.iter().enumerate() {
        let mut stream = root.split(i as u64);
        match part {
            Suite::Moments => moments(opts, &mut stream, &mut out)?,
            Suite::Smoothing => smoothing(opts, &mut stream, &mut out)?,
            Suite::Variance => variance(opts, &mut stream, &mut out)?,
            Suite::Proposition1 => proposition1(opts, &mut stream, &mut out)?,
            Suite::All => unreachable!("expanded above"),
        }
    }
    out.passed = out.reports.iter().all(|r| r.passed);
    Ok(out)
}

fn moments(opts: &DiagnoseOptions, s: &mut RandomStream, out: &mut SuiteOutcome) -> Result<()> {
    for d in [1usize, 4, 32] {
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        let random: Vec<f64> = (0..d).map(|_| s.next_normal()).collect();
        out.reports
            .push(check_sphere_moment(d, &e1, opts.n_moment, s)?);
        out.reports
            .push(check_sphere_moment(d, &random, opts.n_moment, s)?);
    }
    for d in [2usize, 8, 32] {
        out.reports.push(check_ball_moment(d, opts.n_moment, s)?);
    }
    Ok(())
}

fn smoothing(opts: &DiagnoseOptions, s: &mut RandomStream, out: &mut SuiteOutcome) -> Result<()> {
    let d = 8;
    let norm = opts.prepare(make_norm_problem(d)?)?;
    let lse = opts.prepare(make_logsumexp_problem(d, 1.0)?)?;
    let quad = opts.prepare(make_quadratic_problem(d, 1.0, 4.0)?)?;
    for alpha in [0.05, 0.2] {
        for p in [&norm, &lse] {
            let probes = box_probes(p, opts.n_probes, s);
            let sm = SmoothedSurrogate::new(p.clone(), alpha)?;
            out.reports
                .extend(sm.check_smoothing_bounds(&probes, s, opts.n_value, opts.n_grad)?);
        }
        let sm = SmoothedSurrogate::new(quad.clone(), alpha)?;
        let pairs = box_pairs(&quad, opts.n_probes, s);
        out.reports
            .extend(sm.check_inherited_properties(&pairs, &pairs, s, opts.n_value)?);
    }
    let (lsq, _) = make_least_squares(6, 40, RowMode::RademacherRows, opts.seed)?;
    let problems = [
        norm,
        lse,
        quad,
        opts.prepare(make_nonconvex_problem(d)?)?,
        opts.prepare(lsq)?,
    ];
    for p in &problems {
        out.reports.extend(check_declared_constants(p, 1000, s)?);
    }
    Ok(())
}

fn traced_run(
    p: &Problem,
    schedule: &Schedule,
    mode: Mode,
    seed: u64,
) -> Result<crate::optimizer::Trace> {
    let opts = RunOptions {
        keep_trace: true,
        row_stride: schedule.horizon.max(1),
        ..Default::default()
    };
    Ok(run(p, schedule, seed, mode, &opts)?
        .trace
        .expect("trace requested"))
}

fn variance(opts: &DiagnoseOptions, s: &mut RandomStream, out: &mut SuiteOutcome) -> Result<()> {
    let horizon = opts.variance_horizon;
    let all: Vec<usize> = (1..=horizon).collect();

    // conditional mean of the residual estimate on the quadratic
    let quad = opts.prepare(make_quadratic_problem(8, 1.0, 4.0)?)?;
    let sched = Schedule::manual(Setting::DetSmoothScvx, 1e-3, 0.1, 10)?;
    let tr = traced_run(&quad, &sched, Mode::Deterministic, opts.seed)?;
    for ctx in contexts_from_trace(&tr, &[1, 10])? {
        out.reports.push(check_residual_unbiased(
            &quad,
            &ctx,
            0.1,
            opts.n_unbiased,
            10,
            5.0,
            s,
        )?);
    }

    // smooth recursion along a logsumexp run
    let lse = opts.prepare(make_logsumexp_problem(4, 1.0)?)?;
    let sched = make_schedule(
        Setting::DetSmoothCvx,
        &lse,
        Budget::Horizon(horizon),
        lse.start(),
        None,
    )?;
    let tr = traced_run(&lse, &sched, Mode::Deterministic, opts.seed)?;
    let ctx = contexts_from_trace(&tr, &all)?;
    out.reports.push(check_variance_smooth(
        &lse,
        &ctx,
        sched.alpha,
        sched.eta,
        Mode::Deterministic,
        opts.n_resample,
        opts.n_resample,
        s,
    )?);

    // nonsmooth bound along a norm run, with measured c0
    let norm = opts.prepare(make_norm_problem(8)?)?;
    let sched = make_schedule(
        Setting::DetNonsmoothCvx,
        &norm,
        Budget::Horizon(horizon),
        norm.start(),
        None,
    )?;
    let c0 = estimate_c0(&norm, sched.alpha, opts.n_c0, 4, s)?;
    let tr = traced_run(&norm, &sched, Mode::Deterministic, opts.seed)?;
    let ctx = contexts_from_trace(&tr, &all)?;
    out.reports.push(check_variance_nonsmooth(
        &norm,
        &ctx,
        sched.alpha,
        sched.eta,
        c0.c0_hat,
        Mode::Deterministic,
        opts.n_resample,
        s,
    )?);

    // stochastic twin with value noise
    let noisy = opts.prepare(add_value_noise(make_norm_problem(8)?, 0.5)?)?;
    let alpha = 0.2;
    let eta = alpha / (3.0 * 8.0 * noisy.constants.l0()?);
    let sched = Schedule::manual(Setting::StoNonsmoothCvx, eta, alpha, horizon)?;
    let c0n = estimate_c0(&noisy, alpha, opts.n_c0, 4, s)?;
    let tr = traced_run(&noisy, &sched, Mode::Stochastic, opts.seed)?;
    let ctx = contexts_from_trace(&tr, &all)?;
    out.reports.push(check_variance_nonsmooth(
        &noisy,
        &ctx,
        alpha,
        eta,
        c0n.c0_hat,
        Mode::Stochastic,
        opts.n_resample,
        s,
    )?);
    out.c0.push(c0);
    out.c0.push(c0n);

    // estimator second moments
    let one = make_constant_problem(8, 1.0)?;
    let x_star = quad.constants.x_star()?.to_vec();
    let (reports, table) = check_estimator_contrasts(
        &one,
        0.1,
        &quad,
        &x_star,
        0.01,
        opts.n_contrast,
        1000,
        0.2,
        s,
    )?;
    out.reports.extend(reports);
    out.variance_table.extend(table);
    Ok(())
}

fn proposition1(
    opts: &DiagnoseOptions,
    s: &mut RandomStream,
    out: &mut SuiteOutcome,
) -> Result<()> {
    let (_, data) = make_least_squares(16, 200, RowMode::RademacherRows, opts.seed)?;
    out.reports.push(check_proposition1(&data, 20, 20, 0.5, s)?);
    Ok(())
}
