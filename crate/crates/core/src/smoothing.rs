//! The uniform-ball smoothed surrogate `f_alpha(x) = E f(x + alpha * u)`,
//! `u` uniform in the unit ball.
//!
//! Values and gradients are estimated by Monte Carlo with explicit standard
//! errors; quadratic and affine bases use their closed forms when asked for
//! the exact path. Gradient estimates use the sphere identity
//! `grad f_alpha(x) = (d / alpha) E[(f(x + alpha u) - f(x)) u]`; subtracting
//! `f(x)` leaves the expectation unchanged (`E u = 0`) and removes the
//! `f(x)^2 d^2 / alpha^2` variance term.

use serde::Serialize;

use crate::error::{Result, ZoError};
use crate::linalg::{add_scaled, dist, dot, norm, norm_sq, sub};
use crate::mc::{par_scalar, par_vector};
use crate::problems::Problem;
use crate::report::{BoundCheckReport, SlackPolicy};
use crate::rng::{sample, Distribution, RandomStream};

pub const DEFAULT_VALUE_BUDGET: usize = 100_000;
pub const DEFAULT_GRADIENT_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McValue {
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McGradient {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Trace of the per-draw covariance.
    pub cov_trace: f64,
    pub n: usize,
}

impl McGradient {
    /// Root-mean-square error of `mean` as a vector: `sqrt(tr(Cov) / n)`.
    pub fn norm_se(&self) -> f64 {
        (self.cov_trace / self.n as f64).sqrt()
    }

    fn exact(mean: Vec<f64>, n: usize) -> Self {
        let d = mean.len();
        Self {
            mean,
            std_err: vec![0.0; d],
            cov_trace: 0.0,
            n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoothedSurrogate {
    base: Problem,
    alpha: f64,
    mc_budget: usize,
}

fn draw(dist: Distribution, s: &mut RandomStream, d: usize) -> Vec<f64> {
    sample(dist, s, d).expect("dimension is positive").vector
}

impl SmoothedSurrogate {
    pub fn new(base: Problem, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ZoError::Parameter(format!(
                "smoothing radius must be positive (got {alpha})"
            )));
        }
        Ok(Self {
            base,
            alpha,
            mc_budget: DEFAULT_VALUE_BUDGET,
        })
    }

    pub fn with_budget(mut self, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(ZoError::Parameter("mc_budget must be at least 1".into()));
        }
        self.mc_budget = n;
        Ok(self)
    }

    pub fn base(&self) -> &Problem {
        &self.base
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mc_budget(&self) -> usize {
        self.mc_budget
    }

    fn d(&self) -> usize {
        self.base.dim()
    }

    pub fn exact_value(&self, x: &[f64]) -> Option<f64> {
        self.base.objective().smoothed_value(x, self.alpha)
    }

    pub fn exact_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.base.objective().smoothed_gradient(x, self.alpha)
    }

    /// MC estimate of `f_alpha(x)` from `n` ball draws.
    pub fn eval_falpha_mc(
        &self,
        x: &[f64],
        stream: &mut RandomStream,
        n: usize,
    ) -> Result<McValue> {
        check_n(n)?;
        let (d, a, p) = (self.d(), self.alpha, &self.base);
        let st = par_scalar(stream, n, |s| {
            let u = draw(Distribution::UnitBall, s, d);
            p.value(&add_scaled(x, a, &u))
        });
        Ok(McValue {
            mean: st.mean(),
            std_err: st.std_err(),
        })
    }

    /// MC estimate of `f_alpha(x) - f(x)`. Lower variance than differencing
    /// two separate estimates.
    pub fn eval_gap_mc(&self, x: &[f64], stream: &mut RandomStream, n: usize) -> Result<McValue> {
        check_n(n)?;
        let (d, a, p) = (self.d(), self.alpha, &self.base);
        let fx = p.value(x);
        let st = par_scalar(stream, n, |s| {
            let u = draw(Distribution::UnitBall, s, d);
            p.value(&add_scaled(x, a, &u)) - fx
        });
        Ok(McValue {
            mean: st.mean(),
            std_err: st.std_err(),
        })
    }

    /// MC estimate of `f_alpha(x) - f_alpha(y)` with common ball draws.
    pub fn eval_difference_mc(
        &self,
        x: &[f64],
        y: &[f64],
        stream: &mut RandomStream,
        n: usize,
    ) -> Result<McValue> {
        check_n(n)?;
        let (d, a, p) = (self.d(), self.alpha, &self.base);
        let st = par_scalar(stream, n, |s| {
            let u = draw(Distribution::UnitBall, s, d);
            p.value(&add_scaled(x, a, &u)) - p.value(&add_scaled(y, a, &u))
        });
        Ok(McValue {
            mean: st.mean(),
            std_err: st.std_err(),
        })
    }

    /// MC estimate of `grad f_alpha(x)` from `n` sphere draws.
    pub fn eval_grad_falpha_mc(
        &self,
        x: &[f64],
        stream: &mut RandomStream,
        n: usize,
    ) -> Result<McGradient> {
        check_n(n)?;
        let (d, a, p) = (self.d(), self.alpha, &self.base);
        let fx = p.value(x);
        let scale = d as f64 / a;
        let st = par_vector(stream, n, d, |s, out| {
            let u = draw(Distribution::UnitSphere, s, d);
            let c = scale * (p.value(&add_scaled(x, a, &u)) - fx);
            out.iter_mut().zip(&u).for_each(|(o, ui)| *o = c * ui);
        });
        Ok(McGradient {
            mean: st.mean(),
            std_err: st.std_err(),
            cov_trace: st.cov_trace(),
            n,
        })
    }

    /// MC estimate of `grad f_alpha(x) - grad f_alpha(y)` with common draws.
    pub fn eval_grad_difference_mc(
        &self,
        x: &[f64],
        y: &[f64],
        stream: &mut RandomStream,
        n: usize,
    ) -> Result<McGradient> {
        check_n(n)?;
        let (d, a, p) = (self.d(), self.alpha, &self.base);
        let (fx, fy) = (p.value(x), p.value(y));
        let scale = d as f64 / a;
        let st = par_vector(stream, n, d, |s, out| {
            let u = draw(Distribution::UnitSphere, s, d);
            let c = scale
                * ((p.value(&add_scaled(x, a, &u)) - fx) - (p.value(&add_scaled(y, a, &u)) - fy));
            out.iter_mut().zip(&u).for_each(|(o, ui)| *o = c * ui);
        });
        Ok(McGradient {
            mean: st.mean(),
            std_err: st.std_err(),
            cov_trace: st.cov_trace(),
            n,
        })
    }

    /// Closed-form gradient when available, otherwise MC with `n` draws.
    pub fn gradient(&self, x: &[f64], stream: &mut RandomStream, n: usize) -> Result<McGradient> {
        match self.exact_gradient(x) {
            Some(g) => Ok(McGradient::exact(g, 0)),
            None => self.eval_grad_falpha_mc(x, stream, n),
        }
    }

    /// Value, Lipschitz and smoothness bounds on `f_alpha - f` at each probe.
    ///
    /// Produces one report per applicable bound: `f_alpha >= f` (convex),
    /// `|f_alpha - f| <= L0 alpha` (Lipschitz), `|f_alpha - f| <= L alpha^2 / 2`
    /// and `||grad f_alpha - grad f|| <= L alpha` (smooth).
    pub fn check_smoothing_bounds(
        &self,
        probes: &[Vec<f64>],
        stream: &mut RandomStream,
        n_value: usize,
        n_grad: usize,
    ) -> Result<Vec<BoundCheckReport>> {
        let seed = stream.seed();
        let c = &self.base.constants;
        let tags = self.base.classes;
        let a = self.alpha;
        let id = self.base.id().to_string();

        let mut gaps = Vec::with_capacity(probes.len());
        for x in probes {
            let g = match self.exact_value(x) {
                Some(v) => McValue {
                    mean: v - self.base.value(x),
                    std_err: 0.0,
                },
                None => self.eval_gap_mc(x, stream, n_value)?,
            };
            gaps.push(g);
        }
        let se: Vec<f64> = gaps.iter().map(|g| g.std_err).collect();
        let abs_gap: Vec<f64> = gaps.iter().map(|g| g.mean.abs()).collect();

        let mut out = Vec::new();
        if tags.convex {
            out.push(BoundCheckReport::evaluate(
                format!("{id}: f_alpha >= f (alpha = {a})"),
                gaps.iter().map(|g| -g.mean).collect(),
                vec![0.0; probes.len()],
                se.clone(),
                SlackPolicy::std_err_uncapped(3.0),
                n_value as u64,
                seed,
            ));
        }
        if let (true, Some(l0)) = (tags.lipschitz, c.lipschitz) {
            out.push(BoundCheckReport::evaluate(
                format!("{id}: |f_alpha - f| <= L0 alpha (alpha = {a})"),
                abs_gap.clone(),
                vec![l0 * a; probes.len()],
                se.clone(),
                SlackPolicy::std_err(3.0),
                n_value as u64,
                seed,
            ));
        }
        if let (true, Some(l)) = (tags.smooth, c.smoothness) {
            out.push(BoundCheckReport::evaluate(
                format!("{id}: |f_alpha - f| <= L alpha^2 / 2 (alpha = {a})"),
                abs_gap,
                vec![0.5 * l * a * a; probes.len()],
                se,
                SlackPolicy::std_err(3.0),
                n_value as u64,
                seed,
            ));
            let mut lhs = Vec::with_capacity(probes.len());
            let mut gse = Vec::with_capacity(probes.len());
            for x in probes {
                let g = self.gradient(x, stream, n_grad)?;
                lhs.push(dist(&g.mean, &self.base.gradient(x)));
                gse.push(g.norm_se());
            }
            out.push(BoundCheckReport::evaluate(
                format!("{id}: ||grad f_alpha - grad f|| <= L alpha (alpha = {a})"),
                lhs,
                vec![l * a; probes.len()],
                gse,
                SlackPolicy::std_err(5.0),
                n_grad as u64,
                seed,
            ));
        }
        Ok(out)
    }

    /// Lipschitz, smoothness and strong-convexity inequalities for `f_alpha`
    /// with the base problem's declared constants.
    pub fn check_inherited_properties(
        &self,
        pairs: &[(Vec<f64>, Vec<f64>)],
        triples: &[(Vec<f64>, Vec<f64>)],
        stream: &mut RandomStream,
        n: usize,
    ) -> Result<Vec<BoundCheckReport>> {
        let seed = stream.seed();
        let c = &self.base.constants;
        let tags = self.base.classes;
        let id = self.base.id().to_string();
        let a = self.alpha;
        let mut out = Vec::new();

        if let (true, Some(l0)) = (tags.lipschitz, c.lipschitz) {
            let (mut lhs, mut rhs, mut se) = (vec![], vec![], vec![]);
            for (x, y) in pairs {
                let v = match (self.exact_value(x), self.exact_value(y)) {
                    (Some(fx), Some(fy)) => McValue {
                        mean: fx - fy,
                        std_err: 0.0,
                    },
                    _ => self.eval_difference_mc(x, y, stream, n)?,
                };
                lhs.push(v.mean.abs());
                rhs.push(l0 * dist(x, y));
                se.push(v.std_err);
            }
            out.push(BoundCheckReport::evaluate(
                format!("{id}: f_alpha is L0-Lipschitz (alpha = {a})"),
                lhs,
                rhs,
                se,
                SlackPolicy::std_err(6.0),
                n as u64,
                seed,
            ));
        }

        if let (true, Some(l)) = (tags.smooth, c.smoothness) {
            let (mut lhs, mut rhs, mut se) = (vec![], vec![], vec![]);
            for (x, y) in pairs {
                let g = match (self.exact_gradient(x), self.exact_gradient(y)) {
                    (Some(gx), Some(gy)) => McGradient::exact(sub(&gx, &gy), 0),
                    _ => self.eval_grad_difference_mc(x, y, stream, n)?,
                };
                lhs.push(norm(&g.mean));
                rhs.push(l * dist(x, y));
                se.push(g.norm_se());
            }
            out.push(BoundCheckReport::evaluate(
                format!("{id}: grad f_alpha is L-Lipschitz (alpha = {a})"),
                lhs,
                rhs,
                se,
                SlackPolicy::std_err(6.0),
                n as u64,
                seed,
            ));
        }

        if let (true, Some(mu)) = (tags.strongly_convex, c.strong_convexity) {
            // f_alpha(x) - f_alpha(y) + <grad f_alpha(x), y - x> + mu/2 ||y - x||^2 <= 0
            let (mut lhs, mut se) = (vec![], vec![]);
            for (x, y) in triples {
                let yx = sub(y, x);
                let (diff, g) = match (
                    self.exact_value(x),
                    self.exact_value(y),
                    self.exact_gradient(x),
                ) {
                    (Some(fx), Some(fy), Some(gx)) => (
                        McValue {
                            mean: fx - fy,
                            std_err: 0.0,
                        },
                        McGradient::exact(gx, 0),
                    ),
                    _ => (
                        self.eval_difference_mc(x, y, stream, n)?,
                        self.eval_grad_falpha_mc(x, stream, n)?,
                    ),
                };
                lhs.push(diff.mean + dot(&g.mean, &yx) + 0.5 * mu * norm_sq(&yx));
                let gse: f64 = g
                    .std_err
                    .iter()
                    .zip(&yx)
                    .map(|(s, v)| (s * v).powi(2))
                    .sum();
                se.push((diff.std_err.powi(2) + gse).sqrt());
            }
            let k = triples.len();
            out.push(BoundCheckReport::evaluate(
                format!("{id}: f_alpha is mu-strongly convex (alpha = {a})"),
                lhs,
                vec![0.0; k],
                se,
                SlackPolicy::std_err_uncapped(6.0),
                n as u64,
                seed,
            ));
        }
        Ok(out)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(ZoError::Parameter(format!(
            "Monte Carlo estimates need n >= 2 draws (got {n})"
        )))
    } else {
        Ok(())
    }
}

/// Kernel for [`smoothing_gradient_gap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Ball,
    Gaussian,
}

/// `||E grad f(x + alpha v) - grad f(x)||` for `v` uniform in the unit ball
/// or standard normal, estimated by averaging the diagnostic gradient.
/// Returns `(gap, rms standard error)`.
pub fn smoothing_gradient_gap(
    problem: &Problem,
    x: &[f64],
    alpha: f64,
    kernel: Kernel,
    stream: &mut RandomStream,
    n: usize,
) -> Result<(f64, f64)> {
    check_n(n)?;
    let d = problem.dim();
    let dist_kind = match kernel {
        Kernel::Ball => Distribution::UnitBall,
        Kernel::Gaussian => Distribution::StandardGaussian,
    };
    let g0 = problem.gradient(x);
    let st = par_vector(stream, n, d, |s, out| {
        let v = draw(dist_kind, s, d);
        let g = problem.gradient(&add_scaled(x, alpha, &v));
        out.iter_mut()
            .zip(g.iter().zip(&g0))
            .for_each(|(o, (gi, g0i))| *o = gi - g0i);
    });
    Ok((norm(&st.mean()), (st.cov_trace() / n as f64).sqrt()))
}

/// `grad f_alpha(x) = E grad f(x + alpha u)`, `u` uniform in the ball, by
/// averaging the diagnostic gradient. Valid for differentiable bases and far
/// less noisy than the zeroth-order identity.
pub fn smoothed_gradient_by_averaging(
    problem: &Problem,
    x: &[f64],
    alpha: f64,
    stream: &mut RandomStream,
    n: usize,
) -> Result<McGradient> {
    check_n(n)?;
    if let Some(g) = problem.objective().smoothed_gradient(x, alpha) {
        return Ok(McGradient::exact(g, n));
    }
    let d = problem.dim();
    let st = par_vector(stream, n, d, |s, out| {
        let v = draw(Distribution::UnitBall, s, d);
        out.copy_from_slice(&problem.gradient(&add_scaled(x, alpha, &v)));
    });
    Ok(McGradient {
        mean: st.mean(),
        std_err: st.std_err(),
        cov_trace: st.cov_trace(),
        n,
    })
}

/// Uniform points in the experiment box.
pub fn box_probes(problem: &Problem, n: usize, stream: &mut RandomStream) -> Vec<Vec<f64>> {
    (0..n).map(|_| problem.sample_in_box(stream)).collect()
}

/// Independent point pairs in the experiment box.
pub fn box_pairs(
    problem: &Problem,
    n: usize,
    stream: &mut RandomStream,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|_| (problem.sample_in_box(stream), problem.sample_in_box(stream)))
        .collect()
}
