//! Empirical checks of the variance lemmas, moment identities and declared
//! problem constants.
//!
//! Variance checks work on a recorded trajectory: at each selected iterate
//! the prefix (x_t, x_{t-1}, stored residual value, ||g_{t-1}||) is frozen and
//! only the current direction (and, in stochastic mode, the current noise
//! sample) is redrawn.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZoError};
use crate::estimators::{EstimatorRegistry, Oracle};
use crate::linalg::{add_scaled, dist, dot, norm_sq, sub};
use crate::mc::{par_fold, par_scalar, par_vector, PowerSums, ScalarStats};
use crate::optimizer::{Mode, Trace};
use crate::problems::{LeastSquaresData, Problem};
use crate::report::{BoundCheckReport, SlackPolicy};
use crate::rng::{sample, sample_ball, sample_sphere, Distribution, RandomStream};
use crate::smoothing::smoothed_gradient_by_averaging;

// ---------------------------------------------------------------------------
// fourth-moment constant

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C0Estimate {
    pub d: usize,
    pub alpha: f64,
    pub c0_hat: f64,
    pub n_draws: usize,
    pub per_probe: Vec<f64>,
}

/// `c0_hat = max_x d sqrt(E[(f(x + alpha u) - E f(x + alpha u))^4]) / (alpha L0)^2`
/// over the box center and `n_probes - 1` random box points.
pub fn estimate_c0(
    problem: &Problem,
    alpha: f64,
    n_draws: usize,
    n_probes: usize,
    stream: &mut RandomStream,
) -> Result<C0Estimate> {
    if !problem.classes.lipschitz {
        return Err(ZoError::Capability(format!(
            "problem {:?} is not tagged Lipschitz",
            problem.id()
        )));
    }
    let l0 = problem.constants.l0()?;
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(ZoError::Parameter(format!(
            "alpha must be positive (got {alpha})"
        )));
    }
    if n_draws < 2 {
        return Err(ZoError::Parameter("n_draws must be at least 2".into()));
    }
    let d = problem.dim();
    let mut probes = vec![problem.box_center()];
    while probes.len() < n_probes.max(1) {
        probes.push(problem.sample_in_box(stream));
    }
    let mut per_probe = Vec::with_capacity(probes.len());
    for x in &probes {
        let shift = problem.value(x);
        let sums = par_fold(
            stream,
            n_draws,
            || PowerSums::with_shift(shift),
            |acc, s| {
                let u = sample_sphere(s, d).expect("dimension is positive").vector;
                acc.push(problem.value(&add_scaled(x, alpha, &u)));
            },
            |a, b| a.merge(b),
        );
        per_probe.push(d as f64 * sums.central_moment_4().sqrt() / (alpha * l0).powi(2));
    }
    let c0_hat = per_probe.iter().copied().fold(0.0, f64::max);
    Ok(C0Estimate {
        d,
        alpha,
        c0_hat,
        n_draws,
        per_probe,
    })
}

/// Measured c0 values keyed by problem id and dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct C0Cache {
    entries: BTreeMap<String, f64>,
}

impl C0Cache {
    fn key(problem_id: &str, d: usize) -> String {
        format!("{problem_id}/{d}")
    }

    pub fn get(&self, problem_id: &str, d: usize) -> Option<f64> {
        self.entries.get(&Self::key(problem_id, d)).copied()
    }

    pub fn insert(&mut self, problem_id: &str, d: usize, c0: f64) {
        self.entries.insert(Self::key(problem_id, d), c0);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// variance lemmas

/// Frozen prefix at iterate t.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateContext {
    pub t: usize,
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    /// Stored residual value f(x_{t-1} + alpha u_{t-1}) (noisy when stochastic).
    pub prev_value: f64,
    /// ||g_{t-1}||^2, zero at t = 1.
    pub prev_est_norm_sq: f64,
}

/// Contexts for the 1-based iterates `ts` of a traced run.
pub fn contexts_from_trace(trace: &Trace, ts: &[usize]) -> Result<Vec<IterateContext>> {
    let steps = trace.est_norm_sq.len();
    ts.iter()
        .map(|&t| {
            if t == 0 || t > steps {
                return Err(ZoError::Size(format!("iterate {t} outside 1..={steps}")));
            }
            let i = t - 1;
            Ok(IterateContext {
                t,
                x: trace.points[i].clone(),
                x_prev: trace.points[i.saturating_sub(1)].clone(),
                prev_value: trace.prev_values[i],
                prev_est_norm_sq: if i == 0 {
                    0.0
                } else {
                    trace.est_norm_sq[i - 1]
                },
            })
        })
        .collect()
}

/// Conditional `E ||g_t||^2` of the residual estimator given the prefix.
pub fn conditional_second_moment(
    problem: &Problem,
    ctx: &IterateContext,
    alpha: f64,
    mode: Mode,
    n: usize,
    stream: &mut RandomStream,
) -> Result<ScalarStats> {
    if mode == Mode::Stochastic && !problem.has_oracle() {
        return Err(ZoError::Capability(format!(
            "problem {:?} has no stochastic oracle",
            problem.id()
        )));
    }
    let d = problem.dim();
    let k = (d as f64 / alpha).powi(2);
    Ok(par_scalar(stream, n, |s| {
        let u = sample_sphere(s, d).expect("dimension is positive").vector;
        let y = add_scaled(&ctx.x, alpha, &u);
        let v = match mode {
            Mode::Deterministic => problem.value(&y),
            Mode::Stochastic => problem.noisy_value(&y, s).expect("oracle checked"),
        };
        k * (v - ctx.prev_value).powi(2)
    }))
}

fn check_eta(eta: f64, cap: f64, what: &str) -> Result<()> {
    if eta > cap * (1.0 + 1e-12) {
        Err(ZoError::Precondition(format!(
            "eta = {eta:e} exceeds the {what} cap {cap:e}"
        )))
    } else {
        Ok(())
    }
}

/// `E||g_t||^2 <= 12 c0 d L0^2` (deterministic) or
/// `24 c0 d L0^2 + 24 d^2 sigma0^2 / alpha^2` (stochastic) at each context.
#[allow(clippy::too_many_arguments)]
pub fn check_variance_nonsmooth(
    problem: &Problem,
    contexts: &[IterateContext],
    alpha: f64,
    eta: f64,
    c0_hat: f64,
    mode: Mode,
    n_resample: usize,
    stream: &mut RandomStream,
) -> Result<BoundCheckReport> {
    let d = problem.dim() as f64;
    let l0 = problem.constants.l0()?;
    check_eta(eta, alpha / (3.0 * d * l0), "alpha / (3 d L0)")?;
    let rhs = match mode {
        Mode::Deterministic => 12.0 * c0_hat * d * l0 * l0,
        Mode::Stochastic => {
            let s0 = problem.constants.sigma0()?;
            24.0 * c0_hat * d * l0 * l0 + 24.0 * d * d * s0 * s0 / (alpha * alpha)
        }
    };
    let seed = stream.seed();
    let (mut lhs, mut se) = (Vec::new(), Vec::new());
    for ctx in contexts {
        let st = conditional_second_moment(problem, ctx, alpha, mode, n_resample, stream)?;
        lhs.push(st.mean());
        se.push(st.std_err());
    }
    Ok(BoundCheckReport::evaluate(
        format!(
            "{}: nonsmooth estimator second moment ({mode:?})",
            problem.id()
        ),
        lhs,
        vec![rhs; contexts.len()],
        se,
        SlackPolicy::std_err(3.0),
        n_resample as u64,
        seed,
    ))
}

/// The one-step recursion on `E||g_t||^2` for smooth objectives, with
/// `grad f_alpha` estimated by averaging the diagnostic gradient over
/// `n_grad` ball draws (closed form when available).
#[allow(clippy::too_many_arguments)]
pub fn check_variance_smooth(
    problem: &Problem,
    contexts: &[IterateContext],
    alpha: f64,
    eta: f64,
    mode: Mode,
    n_resample: usize,
    n_grad: usize,
    stream: &mut RandomStream,
) -> Result<BoundCheckReport> {
    let dd = problem.dim() as f64;
    let c = &problem.constants;
    let l0 = c.l0()?;
    let l = c.l()?;
    let (carry, grad_k, noise) = match mode {
        Mode::Deterministic => {
            check_eta(eta, alpha / (4.0 * dd * l0), "alpha / (4 d L0)")?;
            (0.5, 8.0 * dd, 0.0)
        }
        Mode::Stochastic => {
            check_eta(eta, alpha / (8.0 * dd * l0), "alpha / (8 d L0)")?;
            let s0 = c.sigma0()?;
            let s1 = c.sigma1()?;
            (
                0.25,
                16.0 * dd,
                64.0 * dd * dd * s0 * s0 / (alpha * alpha) + 32.0 * dd * s1 * s1,
            )
        }
    };
    let curvature = 10.0 * dd * dd * l * l * alpha * alpha;
    let seed = stream.seed();
    let (mut lhs, mut rhs, mut se) = (Vec::new(), Vec::new(), Vec::new());
    for ctx in contexts {
        let st = conditional_second_moment(problem, ctx, alpha, mode, n_resample, stream)?;
        let g_now = smoothed_gradient_by_averaging(problem, &ctx.x, alpha, stream, n_grad)?;
        let g_prev = smoothed_gradient_by_averaging(problem, &ctx.x_prev, alpha, stream, n_grad)?;
        // unbiased estimate of ||grad f_alpha||^2
        let sq = |g: &crate::smoothing::McGradient| {
            (norm_sq(&g.mean) - g.cov_trace / g.n.max(1) as f64).max(0.0)
        };
        lhs.push(st.mean());
        se.push(st.std_err());
        rhs.push(
            carry * ctx.prev_est_norm_sq + grad_k * (sq(&g_now) + sq(&g_prev)) + noise + curvature,
        );
    }
    Ok(BoundCheckReport::evaluate(
        format!(
            "{}: smooth estimator variance recursion ({mode:?})",
            problem.id()
        ),
        lhs,
        rhs,
        se,
        SlackPolicy::std_err(3.0),
        n_resample as u64,
        seed,
    ))
}

/// Conditional mean of the residual estimator at a frozen prefix against
/// `grad f_alpha(x_t)`, coordinate by coordinate within `k` standard errors
/// (the rhs column holds `k SE`).
/// The reference gradient is the closed form when one exists and a
/// `n_ref`-draw gradient average otherwise (its SE is added in quadrature).
pub fn check_residual_unbiased(
    problem: &Problem,
    ctx: &IterateContext,
    alpha: f64,
    n: usize,
    n_ref: usize,
    k: f64,
    stream: &mut RandomStream,
) -> Result<BoundCheckReport> {
    let d = problem.dim();
    let seed = stream.seed();
    let scale = d as f64 / alpha;
    let st = par_vector(stream, n, d, |s, out| {
        let u = sample_sphere(s, d).expect("dimension is positive").vector;
        let c = scale * (problem.value(&add_scaled(&ctx.x, alpha, &u)) - ctx.prev_value);
        out.iter_mut().zip(&u).for_each(|(o, ui)| *o = c * ui);
    });
    let reference = smoothed_gradient_by_averaging(problem, &ctx.x, alpha, stream, n_ref)?;
    let mean = st.mean();
    let se: Vec<f64> = st
        .std_err()
        .iter()
        .zip(&reference.std_err)
        .map(|(a, b)| a.hypot(*b))
        .collect();
    let lhs = mean
        .iter()
        .zip(&reference.mean)
        .map(|(m, g)| (m - g).abs())
        .collect();
    let rhs = se.iter().map(|s| k * s).collect();
    Ok(BoundCheckReport::evaluate(
        format!(
            "{}: residual estimate mean = grad f_alpha (t = {})",
            problem.id(),
            ctx.t
        ),
        lhs,
        rhs,
        se,
        SlackPolicy::exact(),
        n as u64,
        seed,
    ))
}

// ---------------------------------------------------------------------------
// least-squares value/gradient variance ratio

/// Value variance against gradient variance over `d`, each averaged over
/// `n_b_redraws` fresh target vectors, at `n_x` points uniform in the ball
/// of radius `radius` around the generating point.
pub fn check_proposition1(
    data: &LeastSquaresData,
    n_x: usize,
    n_b_redraws: usize,
    radius: f64,
    stream: &mut RandomStream,
) -> Result<BoundCheckReport> {
    if n_b_redraws < 1 {
        return Err(ZoError::Parameter("need at least one target redraw".into()));
    }
    let d = data.dim();
    let seed = stream.seed();
    let (mut lhs, mut rhs) = (Vec::new(), Vec::new());
    let mut work = data.clone();
    for i in 0..n_x {
        let x = if i == 0 {
            data.x_true.clone()
        } else {
            let u = sample_ball(stream, d)?.vector;
            add_scaled(&data.x_true, radius, &u)
        };
        let (mut v, mut g) = (0.0, 0.0);
        for _ in 0..n_b_redraws {
            work.redraw_targets(stream);
            v += work.value_variance(&x);
            g += work.gradient_variance(&x);
        }
        lhs.push(v / n_b_redraws as f64);
        rhs.push(g / (n_b_redraws as f64 * d as f64));
    }
    let mut report = BoundCheckReport::evaluate(
        format!(
            "lsq: value variance <= gradient variance / d (d = {d}, m = {})",
            data.len()
        ),
        lhs,
        rhs,
        vec![0.0; n_x],
        SlackPolicy::exact(),
        n_b_redraws as u64,
        seed,
    );
    if data.rows.iter().any(|a| norm_sq(a) < d as f64) {
        report = report.with_warning("some rows have ||a_i||^2 < d; the hypothesis is not met");
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// exact checks of declared constants

/// `2 mu (f(x) - f*) <= ||grad f(x)||^2` at each probe.
pub fn check_pl_inequality(problem: &Problem, probes: &[Vec<f64>]) -> Result<BoundCheckReport> {
    let mu = problem.constants.mu()?;
    let f_star = problem.constants.f_star()?;
    let lhs = probes
        .iter()
        .map(|x| 2.0 * mu * (problem.value(x) - f_star))
        .collect();
    let rhs = probes
        .iter()
        .map(|x| norm_sq(&problem.gradient(x)))
        .collect();
    Ok(BoundCheckReport::exact(
        format!("{}: 2 mu (f - f*) <= ||grad f||^2", problem.id()),
        lhs,
        rhs,
    ))
}

/// Declared L0, L, mu and f* against random pairs/triples in the box.
pub fn check_declared_constants(
    problem: &Problem,
    n: usize,
    stream: &mut RandomStream,
) -> Result<Vec<BoundCheckReport>> {
    let c = &problem.constants;
    let tags = problem.classes;
    let id = problem.id();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|_| (problem.sample_in_box(stream), problem.sample_in_box(stream)))
        .collect();
    let mut out = Vec::new();
    if let (true, Some(l0)) = (tags.lipschitz, c.lipschitz) {
        out.push(BoundCheckReport::exact(
            format!("{id}: declared L0"),
            pairs
                .iter()
                .map(|(x, y)| (problem.value(x) - problem.value(y)).abs())
                .collect(),
            pairs.iter().map(|(x, y)| l0 * dist(x, y)).collect(),
        ));
    }
    if let (true, Some(l)) = (tags.smooth, c.smoothness) {
        out.push(BoundCheckReport::exact(
            format!("{id}: declared L"),
            pairs
                .iter()
                .map(|(x, y)| dist(&problem.gradient(x), &problem.gradient(y)))
                .collect(),
            pairs.iter().map(|(x, y)| l * dist(x, y)).collect(),
        ));
    }
    if let (true, Some(mu)) = (tags.strongly_convex, c.strong_convexity) {
        // f(x) - f(y) + <grad f(x), y - x> + mu/2 ||y - x||^2 <= 0
        let lhs = pairs
            .iter()
            .map(|(x, y)| {
                let yx = sub(y, x);
                problem.value(x) - problem.value(y)
                    + dot(&problem.gradient(x), &yx)
                    + 0.5 * mu * norm_sq(&yx)
            })
            .collect();
        out.push(BoundCheckReport::exact(
            format!("{id}: declared mu"),
            lhs,
            vec![0.0; n],
        ));
    }
    if let (Some(xs), Some(fs)) = (&c.minimizer, c.f_star) {
        out.push(BoundCheckReport::evaluate(
            format!("{id}: f(x*) = f*"),
            vec![(problem.value(xs) - fs).abs()],
            vec![0.0],
            vec![0.0],
            SlackPolicy::Exact { tol: 1e-10 },
            0,
            0,
        ));
    }
    if tags.smooth && tags.strongly_convex && c.strong_convexity.is_some() {
        let probes: Vec<Vec<f64>> = pairs.iter().map(|(x, _)| x.clone()).collect();
        out.push(check_pl_inequality(problem, &probes)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// sphere / ball moments

/// `E ||u u^T a||^2` for `u` on the unit sphere against `||a||^2 / d`.
pub fn check_sphere_moment(
    d: usize,
    a: &[f64],
    n: usize,
    stream: &mut RandomStream,
) -> Result<BoundCheckReport> {
    if a.len() != d {
        return Err(ZoError::Size(format!(
            "a has length {}, expected {d}",
            a.len()
        )));
    }
    let seed = stream.seed();
    let st = par_scalar(stream, n, |s| {
        let u = sample_sphere(s, d).expect("dimension is positive").vector;
        // ||u u^T a||^2 = (u^T a)^2 ||u||^2
        dot(&u, a).powi(2) * norm_sq(&u)
    });
    Ok(two_sided(
        format!("sphere: E||u u^T a||^2 = ||a||^2 / d (d = {d})"),
        st,
        norm_sq(a) / d as f64,
        n,
        seed,
    ))
}

/// `E ||u||^2` for `u` uniform in the unit ball against `d / (d + 2)`.
pub fn check_ball_moment(
    d: usize,
    n: usize,
    stream: &mut RandomStream,
) -> Result<BoundCheckReport> {
    if d == 0 {
        return Err(ZoError::Dimension(0));
    }
    let seed = stream.seed();
    let st = par_scalar(stream, n, |s| {
        norm_sq(
            &sample(Distribution::UnitBall, s, d)
                .expect("dimension is positive")
                .vector,
        )
    });
    Ok(two_sided(
        format!("ball: E||u||^2 = d / (d + 2) (d = {d})"),
        st,
        d as f64 / (d as f64 + 2.0),
        n,
        seed,
    ))
}

/// `|MC mean - expected| <= 3 SE`, recorded with the SE bound as the rhs so
/// the worst ratio reads as a fraction of the allowed deviation.
fn two_sided(
    name: String,
    st: ScalarStats,
    expected: f64,
    n: usize,
    seed: u64,
) -> BoundCheckReport {
    BoundCheckReport::evaluate(
        name,
        vec![(st.mean() - expected).abs()],
        vec![3.0 * st.std_err()],
        vec![st.std_err()],
        SlackPolicy::exact(),
        n as u64,
        seed,
    )
}

// ---------------------------------------------------------------------------
// estimator second moments

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub estimator: String,
    pub alpha: f64,
    pub second_moment: f64,
    pub std_err: f64,
}

/// MC `E ||G||^2` at a fixed point for each (estimator, alpha).
///
/// Stateless estimators are sampled independently. Stateful ones are run as
/// a chain at the fixed point (step size zero): `burn_in` discarded steps,
/// then `n` recorded steps with a batch-means standard error.
pub fn variance_comparison_table(
    problem: &Problem,
    x: &[f64],
    alphas: &[f64],
    estimators: &[&str],
    n: usize,
    burn_in: usize,
    stream: &mut RandomStream,
) -> Result<Vec<VarianceRow>> {
    let reg = EstimatorRegistry::default();
    let mut rows = Vec::new();
    for id in estimators {
        for &alpha in alphas {
            let probe = reg.create(id)?;
            let stats = if probe.state().is_some() {
                let mut est = probe;
                let mut oracle = Oracle::deterministic(problem);
                let mut s = stream.fork();
                for _ in 0..=burn_in {
                    est.estimate(&mut oracle, x, alpha, &mut s)?;
                }
                let batch = (n / 100).max(1);
                let mut batches = ScalarStats::default();
                let mut all = ScalarStats::default();
                let mut cur = ScalarStats::default();
                for _ in 0..n {
                    let v = norm_sq(&est.estimate(&mut oracle, x, alpha, &mut s)?.vector);
                    cur.push(v);
                    all.push(v);
                    if cur.count() as usize == batch {
                        batches.push(cur.mean());
                        cur = ScalarStats::default();
                    }
                }
                (all.mean(), batches.std_err())
            } else {
                let st = par_scalar(stream, n, |s| {
                    let mut est = reg.create(id).expect("id checked");
                    let mut oracle = Oracle::deterministic(problem);
                    norm_sq(
                        &est.estimate(&mut oracle, x, alpha, s)
                            .expect("alpha checked")
                            .vector,
                    )
                });
                (st.mean(), st.std_err())
            };
            rows.push(VarianceRow {
                estimator: id.to_string(),
                alpha,
                second_moment: stats.0,
                std_err: stats.1,
            });
        }
    }
    Ok(rows)
}

fn second_moment(rows: &[VarianceRow], id: &str, alpha: f64) -> Result<f64> {
    rows.iter()
        .find(|r| r.estimator == id && r.alpha == alpha)
        .map(|r| r.second_moment)
        .ok_or_else(|| ZoError::UnknownId {
            kind: "variance table entry",
            id: format!("{id} @ {alpha}"),
        })
}

/// Second-moment contrasts between estimators:
/// - on `f = value` (nonzero), halving alpha scales the one-point second
///   moment by 4 and leaves the two-point one unchanged (both within `tol`);
/// - on `quadratic` at `x`, the residual chain's second moment is at most a
///   tenth of the one-point estimator's at `alpha_small`.
#[allow(clippy::too_many_arguments)]
pub fn check_estimator_contrasts(
    constant: &Problem,
    alpha: f64,
    quadratic: &Problem,
    x: &[f64],
    alpha_small: f64,
    n: usize,
    burn_in: usize,
    tol: f64,
    stream: &mut RandomStream,
) -> Result<(Vec<BoundCheckReport>, Vec<VarianceRow>)> {
    let seed = stream.seed();
    let x0 = constant.box_center();
    let half = alpha / 2.0;
    let mut rows = variance_comparison_table(
        constant,
        &x0,
        &[alpha, half],
        &["one_point", "two_point"],
        n,
        burn_in,
        stream,
    )?;
    let one = second_moment(&rows, "one_point", half)? / second_moment(&rows, "one_point", alpha)?;
    let (t_full, t_half) = (
        second_moment(&rows, "two_point", alpha)?,
        second_moment(&rows, "two_point", half)?,
    );
    let two_change = if t_full == 0.0 {
        if t_half == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (t_half / t_full - 1.0).abs()
    };
    let mut reports = vec![
        BoundCheckReport::exact(
            format!(
                "{}: one-point second moment x4 when alpha halves (|ratio / 4 - 1|)",
                constant.id()
            ),
            vec![(one / 4.0 - 1.0).abs()],
            vec![tol],
        ),
        BoundCheckReport::exact(
            format!(
                "{}: two-point second moment unchanged when alpha halves",
                constant.id()
            ),
            vec![two_change],
            vec![tol],
        ),
    ];
    let quad_rows = variance_comparison_table(
        quadratic,
        x,
        &[alpha_small],
        &["one_point", "residual"],
        n,
        burn_in,
        stream,
    )?;
    let res = quad_rows
        .iter()
        .find(|r| r.estimator == "residual")
        .expect("requested");
    let one = quad_rows
        .iter()
        .find(|r| r.estimator == "one_point")
        .expect("requested");
    reports.push(BoundCheckReport::evaluate(
        format!(
            "{}: residual second moment <= one-point / 10",
            quadratic.id()
        ),
        vec![res.second_moment],
        vec![one.second_moment / 10.0],
        vec![res.std_err.hypot(one.std_err / 10.0)],
        SlackPolicy::std_err(3.0),
        n as u64,
        seed,
    ));
    rows.extend(quad_rows);
    Ok((reports, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{run, RunOptions, Schedule, Setting};
    use crate::problems::{
        add_value_noise, make_constant_problem, make_least_squares, make_logsumexp_problem,
        make_norm_problem, make_quadratic_problem, RowMode,
    };

    #[test]
    fn c0_of_constant_is_zero() {
        let p = make_constant_problem(4, 3.0).unwrap();
        let c = estimate_c0(&p, 0.1, 1000, 3, &mut RandomStream::new(1)).unwrap();
        assert_eq!(c.c0_hat, 0.0);
    }

    #[test]
    fn c0_on_norm_is_stable_and_dimension_free() {
        let p8 = make_norm_problem(8).unwrap();
        let a = estimate_c0(&p8, 0.1, 200_000, 4, &mut RandomStream::new(1)).unwrap();
        let b = estimate_c0(&p8, 0.1, 200_000, 4, &mut RandomStream::new(2)).unwrap();
        assert!(
            (a.c0_hat / b.c0_hat - 1.0).abs() < 0.1,
            "{} vs {}",
            a.c0_hat,
            b.c0_hat
        );
        let p4 = make_norm_problem(4).unwrap();
        let p32 = make_norm_problem(32).unwrap();
        let c4 = estimate_c0(&p4, 0.1, 100_000, 4, &mut RandomStream::new(3)).unwrap();
        let c32 = estimate_c0(&p32, 0.1, 100_000, 4, &mut RandomStream::new(3)).unwrap();
        let r = c4.c0_hat / c32.c0_hat;
        assert!(
            (1.0 / 3.0..=3.0).contains(&r),
            "{} vs {}",
            c4.c0_hat,
            c32.c0_hat
        );
    }

    #[test]
    fn c0_cache_round_trip() {
        let mut cache = C0Cache::default();
        cache.insert("norm", 8, 1.6);
        let dir = std::env::temp_dir().join(format!("zo-c0-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c0.json");
        cache.save(&path).unwrap();
        assert_eq!(C0Cache::load(&path).unwrap().get("norm", 8), Some(1.6));
        assert_eq!(cache.get("norm", 4), None);
    }

    fn traced(p: &Problem, s: &Schedule, mode: Mode) -> Trace {
        let opts = RunOptions {
            keep_trace: true,
            ..Default::default()
        };
        run(p, s, 3, mode, &opts).unwrap().trace.unwrap()
    }

    #[test]
    fn constant_problem_has_zero_second_moment() {
        let p = make_constant_problem(3, 1.0).unwrap();
        let s = Schedule::manual(Setting::DetNonsmoothCvx, 0.01, 0.1, 10).unwrap();
        let tr = traced(&p, &s, Mode::Deterministic);
        let ctx = contexts_from_trace(&tr, &[1, 5, 10]).unwrap();
        let rep = check_variance_nonsmooth(
            &p,
            &ctx,
            0.1,
            0.01,
            1.0,
            Mode::Deterministic,
            100,
            &mut RandomStream::new(0),
        )
        .unwrap();
        assert!(rep.passed);
        assert!(rep.per_point_lhs.iter().all(|v| *v == 0.0));
        let rep = check_variance_smooth(
            &p,
            &ctx,
            0.1,
            0.005,
            Mode::Deterministic,
            100,
            10,
            &mut RandomStream::new(0),
        )
        .unwrap();
        assert!(rep.per_point_lhs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn variance_checks_refuse_large_steps() {
        let p = make_norm_problem(4).unwrap();
        let s = Schedule::manual(Setting::DetNonsmoothCvx, 0.01, 0.1, 5).unwrap();
        let tr = traced(&p, &s, Mode::Deterministic);
        let ctx = contexts_from_trace(&tr, &[1]).unwrap();
        let err = check_variance_nonsmooth(
            &p,
            &ctx,
            0.1,
            1.0,
            1.0,
            Mode::Deterministic,
            10,
            &mut RandomStream::new(0),
        );
        assert!(matches!(err, Err(ZoError::Precondition(_))));
    }

    #[test]
    fn quadratic_at_minimizer_meets_curvature_term() {
        let p = make_quadratic_problem(4, 1.0, 4.0).unwrap();
        let alpha = 0.1;
        let mut s = RandomStream::new(4);
        let u = sample_sphere(&mut s, 4).unwrap().vector;
        let ctx = IterateContext {
            t: 2,
            x: vec![0.0; 4],
            x_prev: vec![0.0; 4],
            prev_value: p.value(&add_scaled(&[0.0; 4], alpha, &u)),
            prev_est_norm_sq: 0.0,
        };
        let rep = check_variance_smooth(
            &p,
            &[ctx],
            alpha,
            1e-4,
            Mode::Deterministic,
            100_000,
            10,
            &mut s,
        )
        .unwrap();
        let expected_rhs = 10.0 * 16.0 * 16.0 * alpha * alpha;
        assert!((rep.per_point_rhs[0] - expected_rhs).abs() < 1e-12);
        assert!(rep.passed);
    }

    #[test]
    fn logsumexp_recursion_holds_along_a_run() {
        let p = make_logsumexp_problem(4, 1.0).unwrap();
        let alpha = 0.2;
        let eta = alpha / (4.0 * 4.0);
        let s = Schedule::manual(Setting::DetSmoothCvx, eta, alpha, 60).unwrap();
        let tr = traced(&p, &s, Mode::Deterministic);
        let ts: Vec<usize> = (1..=60).step_by(6).collect();
        let ctx = contexts_from_trace(&tr, &ts).unwrap();
        let rep = check_variance_smooth(
            &p,
            &ctx,
            alpha,
            eta,
            Mode::Deterministic,
            20_000,
            20_000,
            &mut RandomStream::new(5),
        )
        .unwrap();
        assert!(rep.passed, "{}", rep.to_table());
    }

    #[test]
    fn stochastic_nonsmooth_bound_dominated_by_noise() {
        let p = add_value_noise(make_norm_problem(8).unwrap(), 0.5).unwrap();
        let alpha = 0.2;
        let eta = alpha / (3.0 * 8.0);
        let s = Schedule::manual(Setting::StoNonsmoothCvx, eta, alpha, 40).unwrap();
        let tr = traced(&p, &s, Mode::Stochastic);
        let ctx = contexts_from_trace(&tr, &[5, 20, 40]).unwrap();
        let rep = check_variance_nonsmooth(
            &p,
            &ctx,
            alpha,
            eta,
            1.6,
            Mode::Stochastic,
            20_000,
            &mut RandomStream::new(6),
        )
        .unwrap();
        assert!(rep.passed, "{}", rep.to_table());
        let noise = 24.0 * 64.0 * 0.25 / (alpha * alpha);
        assert!(noise > 0.5 * rep.per_point_rhs[0]);
    }

    #[test]
    fn proposition1_passes_in_rademacher_mode() {
        let (_, data) = make_least_squares(16, 200, RowMode::RademacherRows, 1).unwrap();
        let rep = check_proposition1(&data, 20, 20, 0.5, &mut RandomStream::new(2)).unwrap();
        assert!(rep.passed, "{}", rep.to_table());
        assert!(rep.worst_ratio <= 1.2);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn proposition1_single_row_is_trivial() {
        let (_, data) = make_least_squares(1, 1, RowMode::RademacherRows, 1).unwrap();
        let rep = check_proposition1(&data, 3, 2, 0.5, &mut RandomStream::new(2)).unwrap();
        assert!(rep.passed);
        assert!(rep.per_point_lhs.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn proposition1_warns_on_gaussian_rows() {
        let (_, data) = make_least_squares(8, 50, RowMode::GaussianRows, 1).unwrap();
        let rep = check_proposition1(&data, 2, 2, 0.5, &mut RandomStream::new(2)).unwrap();
        assert!(!rep.warnings.is_empty());
    }

    #[test]
    fn pl_inequality_on_quadratic() {
        let p = make_quadratic_problem(4, 1.0, 4.0).unwrap();
        let mut s = RandomStream::new(3);
        let mut probes: Vec<Vec<f64>> = (0..100).map(|_| p.sample_in_box(&mut s)).collect();
        probes.push(vec![0.0; 4]);
        probes.push(vec![0.7, 0.0, 0.0, 0.0]);
        let rep = check_pl_inequality(&p, &probes).unwrap();
        assert!(rep.passed);
        // equality along the mu-eigenvector
        let n = probes.len();
        assert!((rep.per_point_lhs[n - 1] - rep.per_point_rhs[n - 1]).abs() < 1e-15);
        assert_eq!(rep.per_point_lhs[n - 2], 0.0);
    }

    #[test]
    fn declared_constants_hold_for_every_problem() {
        let mut s = RandomStream::new(11);
        let (lsq, _) = make_least_squares(6, 40, RowMode::RademacherRows, 2).unwrap();
        let problems = vec![
            make_norm_problem(5).unwrap(),
            make_quadratic_problem(5, 0.5, 3.0).unwrap(),
            make_logsumexp_problem(5, 0.5).unwrap(),
            crate::problems::make_nonconvex_problem(5).unwrap(),
            lsq,
        ];
        for p in &problems {
            for r in check_declared_constants(p, 1000, &mut s).unwrap() {
                assert!(r.passed, "{}", r.summary_line());
            }
        }
    }

    #[test]
    fn halved_smoothness_is_detected() {
        let mut p = make_quadratic_problem(8, 1.0, 4.0).unwrap();
        p.constants.scale("L", 0.5).unwrap();
        let reps = check_declared_constants(&p, 1000, &mut RandomStream::new(1)).unwrap();
        assert!(reps.iter().any(|r| !r.passed));
    }

    #[test]
    fn sphere_and_ball_moments() {
        let mut s = RandomStream::new(12);
        let a = [0.3, -1.0, 2.0, 0.5];
        assert!(check_sphere_moment(4, &a, 200_000, &mut s).unwrap().passed);
        assert!(check_ball_moment(8, 200_000, &mut s).unwrap().passed);
        assert!(check_sphere_moment(3, &a, 10, &mut s).is_err());
    }

    #[test]
    fn variance_table_on_constant_one() {
        let p = make_constant_problem(4, 1.0).unwrap();
        let rows = variance_comparison_table(
            &p,
            &[0.0; 4],
            &[0.2, 0.1],
            &["one_point", "two_point", "residual"],
            20_000,
            10,
            &mut RandomStream::new(1),
        )
        .unwrap();
        let get = |id: &str, a: f64| {
            rows.iter()
                .find(|r| r.estimator == id && r.alpha == a)
                .unwrap()
                .second_moment
        };
        assert!((get("one_point", 0.1) / get("one_point", 0.2) - 4.0).abs() < 1e-9);
        assert_eq!(get("two_point", 0.1), 0.0);
        assert_eq!(get("residual", 0.1), 0.0);
    }

    #[test]
    fn variance_table_on_zero_function() {
        let p = make_constant_problem(3, 0.0).unwrap();
        let rows = variance_comparison_table(
            &p,
            &[1.0; 3],
            &[0.1],
            &[
                "spsa1",
                "one_point",
                "two_point",
                "residual",
                "residual_gaussian",
            ],
            1000,
            5,
            &mut RandomStream::new(1),
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.second_moment == 0.0));
    }
}
