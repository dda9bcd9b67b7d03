//! Benchmark objectives with declared regularity constants.
//!
//! Each instance is an [`Objective`] (value and diagnostic gradient) wrapped
//! in a [`Problem`] together with its [`Constants`], class tags, a default
//! start point and an optional [`StochasticOracle`]. Constants that do not
//! hold globally (for example the Lipschitz constant of a quadratic) are
//! certified on the experiment box `||x - x*|| <= box_radius`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZoError};
use crate::linalg::{dist, dot, norm, norm_sq};
use crate::rng::{sample_ball, sample_gaussian, sample_rademacher, sample_sphere, RandomStream};

pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Exact gradient (a subgradient where `f` is not differentiable). Only
    /// diagnostics may call this; estimators see function values only.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Closed-form ball-smoothed value, when one exists.
    fn smoothed_value(&self, _x: &[f64], _alpha: f64) -> Option<f64> {
        None
    }

    fn smoothed_gradient(&self, _x: &[f64], _alpha: f64) -> Option<Vec<f64>> {
        None
    }
}

/// One realization of the oracle noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StochasticSample {
    /// Standard normal variate, scaled by the oracle.
    Noise(f64),
    /// Index of a data row.
    Index(usize),
}

pub trait StochasticOracle: Send + Sync + fmt::Debug {
    fn draw(&self, stream: &mut RandomStream) -> StochasticSample;
    fn value(&self, base: &dyn Objective, x: &[f64], xi: StochasticSample) -> f64;
    /// Gradient of the sampled component `f(., xi)` when it is available.
    fn component_gradient(
        &self,
        base: &dyn Objective,
        x: &[f64],
        xi: StochasticSample,
    ) -> Option<Vec<f64>>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// L0
    pub lipschitz: Option<f64>,
    /// L
    pub smoothness: Option<f64>,
    /// mu
    pub strong_convexity: Option<f64>,
    pub minimizer: Option<Vec<f64>>,
    pub f_star: Option<f64>,
    pub sigma0: Option<f64>,
    pub sigma1: Option<f64>,
    pub box_radius: f64,
}

impl Constants {
    pub fn l0(&self) -> Result<f64> {
        self.lipschitz.ok_or(ZoError::MissingConstant("L0"))
    }

    pub fn l(&self) -> Result<f64> {
        self.smoothness.ok_or(ZoError::MissingConstant("L"))
    }

    pub fn mu(&self) -> Result<f64> {
        match self.strong_convexity {
            Some(mu) if mu > 0.0 => Ok(mu),
            _ => Err(ZoError::MissingConstant("mu")),
        }
    }

    pub fn x_star(&self) -> Result<&[f64]> {
        self.minimizer
            .as_deref()
            .ok_or(ZoError::MissingConstant("x_star"))
    }

    pub fn f_star(&self) -> Result<f64> {
        self.f_star.ok_or(ZoError::MissingConstant("f_star"))
    }

    pub fn sigma0(&self) -> Result<f64> {
        self.sigma0.ok_or(ZoError::MissingConstant("sigma0"))
    }

    pub fn sigma1(&self) -> Result<f64> {
        self.sigma1.ok_or(ZoError::MissingConstant("sigma1"))
    }

    /// Multiply a named constant (`L0`, `L`, `mu`, `sigma0`, `sigma1`).
    pub fn scale(&mut self, name: &str, factor: f64) -> Result<()> {
        let slot = match name {
            "L0" => &mut self.lipschitz,
            "L" => &mut self.smoothness,
            "mu" => &mut self.strong_convexity,
            "sigma0" => &mut self.sigma0,
            "sigma1" => &mut self.sigma1,
            _ => {
                return Err(ZoError::UnknownId {
                    kind: "constant",
                    id: name.to_string(),
                })
            }
        };
        match slot {
            Some(v) => {
                *v *= factor;
                Ok(())
            }
            None => Err(ZoError::MissingConstant(match name {
                "L0" => "L0",
                "L" => "L",
                "mu" => "mu",
                "sigma0" => "sigma0",
                _ => "sigma1",
            })),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTags {
    pub convex: bool,
    pub strongly_convex: bool,
    pub lipschitz: bool,
    pub smooth: bool,
    pub nonconvex: bool,
}

#[derive(Clone, Debug)]
pub struct Problem {
    id: String,
    objective: Arc<dyn Objective>,
    oracle: Option<Arc<dyn StochasticOracle>>,
    pub constants: Constants,
    pub classes: ClassTags,
    start: Vec<f64>,
}

impl Problem {
    pub fn new(
        id: impl Into<String>,
        objective: Arc<dyn Objective>,
        constants: Constants,
        classes: ClassTags,
        start: Vec<f64>,
    ) -> Self {
        Self {
            id: id.into(),
            objective,
            oracle: None,
            constants,
            classes,
            start,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.objective.gradient(x)
    }

    /// Default initial point x1.
    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn with_start(mut self, x1: Vec<f64>) -> Result<Self> {
        if x1.len() != self.dim() {
            return Err(ZoError::Size(format!(
                "start point has length {}, problem dimension is {}",
                x1.len(),
                self.dim()
            )));
        }
        self.start = x1;
        Ok(self)
    }

    pub fn with_oracle(mut self, oracle: Arc<dyn StochasticOracle>) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn has_oracle(&self) -> bool {
        self.oracle.is_some()
    }

    fn oracle(&self) -> Result<&Arc<dyn StochasticOracle>> {
        self.oracle.as_ref().ok_or_else(|| {
            ZoError::Capability(format!("problem {:?} has no stochastic oracle", self.id))
        })
    }

    pub fn draw_sample(&self, stream: &mut RandomStream) -> Result<StochasticSample> {
        Ok(self.oracle()?.draw(stream))
    }

    /// f(x, xi)
    pub fn value_at(&self, x: &[f64], xi: StochasticSample) -> Result<f64> {
        Ok(self.oracle()?.value(self.objective(), x, xi))
    }

    /// Draw a fresh xi from `stream` and return f(x, xi).
    pub fn noisy_value(&self, x: &[f64], stream: &mut RandomStream) -> Result<f64> {
        let oracle = self.oracle()?;
        let xi = oracle.draw(stream);
        Ok(oracle.value(self.objective(), x, xi))
    }

    pub fn component_gradient(&self, x: &[f64], xi: StochasticSample) -> Result<Option<Vec<f64>>> {
        Ok(self.oracle()?.component_gradient(self.objective(), x, xi))
    }

    /// `f(x) - f(x*)`, or `f(x)` itself when `f*` is undeclared.
    pub fn gap(&self, x: &[f64]) -> f64 {
        self.value(x) - self.constants.f_star.unwrap_or(0.0)
    }

    pub fn box_center(&self) -> Vec<f64> {
        self.constants
            .minimizer
            .clone()
            .unwrap_or_else(|| vec![0.0; self.dim()])
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        match &self.constants.minimizer {
            Some(c) => dist(x, c) <= self.constants.box_radius,
            None => norm(x) <= self.constants.box_radius,
        }
    }

    /// Uniform point in the experiment box.
    pub fn sample_in_box(&self, stream: &mut RandomStream) -> Vec<f64> {
        let center = self.box_center();
        let u = sample_ball(stream, self.dim()).expect("problem dimension is positive");
        center
            .iter()
            .zip(&u.vector)
            .map(|(c, v)| c + self.constants.box_radius * v)
            .collect()
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(ZoError::Dimension(d))
    } else {
        Ok(())
    }
}

/// Unit-norm start point along the all-ones diagonal, offset from `center`.
fn diagonal_start(center: &[f64]) -> Vec<f64> {
    let s = (center.len() as f64).sqrt().recip();
    center.iter().map(|c| c + s).collect()
}

// ---------------------------------------------------------------------------
// norm

#[derive(Debug)]
struct NormObjective {
    d: usize,
}

impl Objective for NormObjective {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        norm(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = norm(x);
        if n == 0.0 {
            vec![0.0; self.d]
        } else {
            x.iter().map(|v| v / n).collect()
        }
    }
}

/// f(x) = ||x||: convex, 1-Lipschitz, nonsmooth at the origin.
pub fn make_norm_problem(d: usize) -> Result<Problem> {
    check_dim(d)?;
    let x_star = vec![0.0; d];
    Ok(Problem::new(
        "norm",
        Arc::new(NormObjective { d }),
        Constants {
            lipschitz: Some(1.0),
            minimizer: Some(x_star.clone()),
            f_star: Some(0.0),
            box_radius: 2.0,
            ..Default::default()
        },
        ClassTags {
            convex: true,
            lipschitz: true,
            ..Default::default()
        },
        diagonal_start(&x_star),
    ))
}

// ---------------------------------------------------------------------------
// quadratic

#[derive(Debug)]
struct QuadraticObjective {
    diag: Vec<f64>,
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.diag.iter().zip(x).map(|(d, v)| d * v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(x).map(|(d, v)| d * v).collect()
    }

    fn smoothed_value(&self, x: &[f64], alpha: f64) -> Option<f64> {
        // E[u u^T] = I / (d + 2) for u uniform in the unit ball
        let d = self.diag.len() as f64;
        let trace: f64 = self.diag.iter().sum();
        Some(self.value(x) + alpha * alpha * trace / (2.0 * (d + 2.0)))
    }

    fn smoothed_gradient(&self, x: &[f64], _alpha: f64) -> Option<Vec<f64>> {
        Some(self.gradient(x))
    }
}

/// f(x) = x^T D x / 2 with D diagonal, spectrum spaced linearly over `[mu, l]`.
pub fn make_quadratic_problem(d: usize, mu: f64, l: f64) -> Result<Problem> {
    check_dim(d)?;
    if !(mu >= 0.0 && l >= 0.0) {
        return Err(ZoError::Constant(format!(
            "mu and L must be nonnegative (mu = {mu}, L = {l})"
        )));
    }
    if mu > l {
        return Err(ZoError::Constant(format!("mu = {mu} exceeds L = {l}")));
    }
    let diag: Vec<f64> = if d == 1 {
        vec![mu]
    } else {
        (0..d)
            .map(|i| mu + (l - mu) * i as f64 / (d - 1) as f64)
            .collect()
    };
    quadratic_from_diagonal(diag, mu, l)
}

/// Quadratic with an explicit diagonal; `mu`/`l` are the declared bounds.
pub fn quadratic_from_diagonal(diag: Vec<f64>, mu: f64, l: f64) -> Result<Problem> {
    check_dim(diag.len())?;
    let d = diag.len();
    let radius = 2.0;
    let x_star = vec![0.0; d];
    Ok(Problem::new(
        "quadratic",
        Arc::new(QuadraticObjective { diag }),
        Constants {
            // sup ||D x|| over the experiment box
            lipschitz: Some(l * radius),
            smoothness: Some(l),
            strong_convexity: Some(mu),
            minimizer: Some(x_star.clone()),
            f_star: Some(0.0),
            box_radius: radius,
            ..Default::default()
        },
        ClassTags {
            convex: true,
            strongly_convex: mu > 0.0,
            lipschitz: true,
            smooth: true,
            nonconvex: false,
        },
        diagonal_start(&x_star),
    ))
}

// ---------------------------------------------------------------------------
// affine / constant

#[derive(Debug)]
struct AffineObjective {
    slope: Vec<f64>,
    offset: f64,
}

impl Objective for AffineObjective {
    fn dim(&self) -> usize {
        self.slope.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.slope, x) + self.offset
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.slope.clone()
    }

    fn smoothed_value(&self, x: &[f64], _alpha: f64) -> Option<f64> {
        Some(self.value(x))
    }

    fn smoothed_gradient(&self, _x: &[f64], _alpha: f64) -> Option<Vec<f64>> {
        Some(self.slope.clone())
    }
}

/// f(x) = c^T x + b. Unbounded below unless `c = 0`.
pub fn make_affine_problem(slope: Vec<f64>, offset: f64) -> Result<Problem> {
    check_dim(slope.len())?;
    let d = slope.len();
    let l0 = norm(&slope);
    let constant = l0 == 0.0;
    Ok(Problem::new(
        if constant { "constant" } else { "affine" },
        Arc::new(AffineObjective { slope, offset }),
        Constants {
            // any L0 >= ||c|| is valid; 1 keeps schedules finite when c = 0
            lipschitz: Some(l0.max(1.0)),
            smoothness: Some(0.0),
            minimizer: constant.then(|| vec![0.0; d]),
            f_star: constant.then_some(offset),
            box_radius: 2.0,
            ..Default::default()
        },
        ClassTags {
            convex: true,
            lipschitz: true,
            smooth: true,
            ..Default::default()
        },
        diagonal_start(&vec![0.0; d]),
    ))
}

/// f(x) = c everywhere.
pub fn make_constant_problem(d: usize, value: f64) -> Result<Problem> {
    make_affine_problem(vec![0.0; d], value)
}

// ---------------------------------------------------------------------------
// log-sum-exp

#[derive(Debug)]
struct LogSumExpObjective {
    d: usize,
    temperature: f64,
}

impl LogSumExpObjective {
    /// Softmax weights over the 2d atoms +-x_i / tau, returned as
    /// (p_plus, p_minus) together with the log-partition.
    fn weights(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let t = self.temperature;
        let m = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / t;
        let plus: Vec<f64> = x.iter().map(|v| (v / t - m).exp()).collect();
        let minus: Vec<f64> = x.iter().map(|v| (-v / t - m).exp()).collect();
        let z: f64 = plus.iter().sum::<f64>() + minus.iter().sum::<f64>();
        let log_z = m + z.ln();
        (
            plus.into_iter().map(|p| p / z).collect(),
            minus.into_iter().map(|p| p / z).collect(),
            log_z,
        )
    }
}

impl Objective for LogSumExpObjective {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (_, _, log_z) = self.weights(x);
        self.temperature * (log_z - (2.0 * self.d as f64).ln())
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (plus, minus, _) = self.weights(x);
        plus.iter().zip(&minus).map(|(p, m)| p - m).collect()
    }
}

/// f(x) = tau * log(sum_i e^{x_i/tau} + e^{-x_i/tau}) - tau * log(2d).
///
/// Symmetric in each coordinate, so x* = 0 and f* = 0. The gradient is a
/// convex combination of unit vectors (L0 = 1) and the Hessian is bounded by
/// `I / tau` (L = 1 / tau), both globally.
pub fn make_logsumexp_problem(d: usize, temperature: f64) -> Result<Problem> {
    check_dim(d)?;
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(ZoError::Parameter(format!(
            "temperature must be positive (got {temperature})"
        )));
    }
    let x_star = vec![0.0; d];
    Ok(Problem::new(
        "logsumexp",
        Arc::new(LogSumExpObjective { d, temperature }),
        Constants {
            lipschitz: Some(1.0),
            smoothness: Some(1.0 / temperature),
            minimizer: Some(x_star.clone()),
            f_star: Some(0.0),
            box_radius: 2.0,
            ..Default::default()
        },
        ClassTags {
            convex: true,
            lipschitz: true,
            smooth: true,
            ..Default::default()
        },
        diagonal_start(&x_star),
    ))
}

// ---------------------------------------------------------------------------
// nonconvex

#[derive(Debug)]
struct CosineWellObjective {
    d: usize,
    amplitude: f64,
    frequency: f64,
}

impl Objective for CosineWellObjective {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (a, b) = (self.amplitude, self.frequency);
        x.iter()
            .map(|v| 0.5 * v * v + a * (1.0 - (b * v).cos()))
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (a, b) = (self.amplitude, self.frequency);
        x.iter().map(|v| v + a * b * (b * v).sin()).collect()
    }
}

pub const NONCONVEX_AMPLITUDE: f64 = 0.5;
pub const NONCONVEX_FREQUENCY: f64 = 2.0;

/// f(x) = sum_i x_i^2 / 2 + a (1 - cos(b x_i)) with a = 0.5, b = 2.
///
/// Every term is nonnegative and vanishes only at 0, so x* = 0 and f* = 0 in
/// any dimension. f'' = 1 + a b^2 cos(b x) ranges over [-1, 3]: L = 3 and
/// the Hessian is indefinite wherever cos(b x_i) < -1 / (a b^2).
pub fn make_nonconvex_problem(d: usize) -> Result<Problem> {
    check_dim(d)?;
    let (a, b) = (NONCONVEX_AMPLITUDE, NONCONVEX_FREQUENCY);
    let radius = 2.0;
    let x_star = vec![0.0; d];
    Ok(Problem::new(
        "nonconvex",
        Arc::new(CosineWellObjective {
            d,
            amplitude: a,
            frequency: b,
        }),
        Constants {
            // ||grad f(x)|| <= ||x|| + a b sqrt(d) on the box
            lipschitz: Some(radius + a * b * (d as f64).sqrt()),
            smoothness: Some(1.0 + a * b * b),
            minimizer: Some(x_star.clone()),
            f_star: Some(0.0),
            box_radius: radius,
            ..Default::default()
        },
        ClassTags {
            lipschitz: true,
            smooth: true,
            nonconvex: true,
            ..Default::default()
        },
        diagonal_start(&x_star),
    ))
}

// ---------------------------------------------------------------------------
// least squares

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RowMode {
    /// +-1 entries, so every row has squared norm exactly d.
    #[default]
    RademacherRows,
    GaussianRows,
}

impl std::str::FromStr for RowMode {
    type Err = ZoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher_rows" | "rademacher" => Ok(RowMode::RademacherRows),
            "gaussian_rows" | "gaussian" => Ok(RowMode::GaussianRows),
            _ => Err(ZoError::UnknownId {
                kind: "row mode",
                id: s.to_string(),
            }),
        }
    }
}

/// Rows a_i, targets b_i ~ N(a_i^T x_true, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresData {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub x_true: Vec<f64>,
    pub mode: RowMode,
}

impl LeastSquaresData {
    pub fn generate(d: usize, m: usize, mode: RowMode, stream: &mut RandomStream) -> Result<Self> {
        check_dim(d)?;
        if m < 1 {
            return Err(ZoError::Size("least squares needs m >= 1 rows".into()));
        }
        let rows = (0..m)
            .map(|_| {
                let s = match mode {
                    RowMode::RademacherRows => sample_rademacher(stream, d),
                    RowMode::GaussianRows => sample_gaussian(stream, d),
                };
                s.map(|s| s.vector)
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = (d as f64).sqrt().recip();
        let x_true: Vec<f64> = sample_gaussian(stream, d)?
            .vector
            .into_iter()
            .map(|v| v * scale)
            .collect();
        let mut data = Self {
            rows,
            targets: vec![0.0; m],
            x_true,
            mode,
        };
        data.redraw_targets(stream);
        Ok(data)
    }

    pub fn dim(&self) -> usize {
        self.x_true.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Fresh b_i ~ N(a_i^T x_true, 1), rows unchanged.
    pub fn redraw_targets(&mut self, stream: &mut RandomStream) {
        for (b, a) in self.targets.iter_mut().zip(&self.rows) {
            *b = dot(a, &self.x_true) + stream.next_normal();
        }
    }

    /// Same rows and x_true, noise-free targets.
    pub fn noiseless(&self) -> Self {
        let mut out = self.clone();
        for (b, a) in out.targets.iter_mut().zip(&out.rows) {
            *b = dot(a, &out.x_true);
        }
        out
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.targets)
            .map(|(a, b)| dot(a, x) - b)
            .collect()
    }

    /// f_i(x) = (a_i^T x - b_i)^2
    pub fn component_value(&self, x: &[f64], i: usize) -> f64 {
        let r = dot(&self.rows[i], x) - self.targets[i];
        r * r
    }

    pub fn component_gradient(&self, x: &[f64], i: usize) -> Vec<f64> {
        let r = dot(&self.rows[i], x) - self.targets[i];
        self.rows[i].iter().map(|a| 2.0 * r * a).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = self.residuals(x);
        r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = self.residuals(x);
        let m = r.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for (a, ri) in self.rows.iter().zip(&r) {
            crate::linalg::axpy(&mut g, 2.0 * ri / m, a);
        }
        g
    }

    /// (1/m) sum_i (f_i(x) - f(x))^2, summed exactly over the data.
    pub fn value_variance(&self, x: &[f64]) -> f64 {
        let fi: Vec<f64> = self.residuals(x).iter().map(|r| r * r).collect();
        let m = fi.len() as f64;
        let f = fi.iter().sum::<f64>() / m;
        fi.iter().map(|v| (v - f) * (v - f)).sum::<f64>() / m
    }

    /// (1/m) sum_i ||grad f_i(x) - grad f(x)||^2, summed exactly.
    pub fn gradient_variance(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        let r = self.residuals(x);
        let m = r.len() as f64;
        self.rows
            .iter()
            .zip(&r)
            .map(|(a, ri)| {
                a.iter()
                    .zip(&g)
                    .map(|(aj, gj)| {
                        let e = 2.0 * ri * aj - gj;
                        e * e
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / m
    }

    fn gram(&self) -> DMatrix<f64> {
        let d = self.dim();
        let m = self.len();
        let a = DMatrix::from_fn(m, d, |i, j| self.rows[i][j]);
        a.transpose() * a / m as f64
    }

    /// Minimum-norm minimizer of the empirical objective.
    pub fn solve(&self) -> Vec<f64> {
        let d = self.dim();
        let m = self.len();
        let a = DMatrix::from_fn(m, d, |i, j| self.rows[i][j]);
        let b = DVector::from_column_slice(&self.targets);
        let svd = a.svd(true, true);
        let x = svd
            .solve(&b, 1e-12)
            .expect("SVD was computed with both U and V");
        x.iter().copied().collect()
    }
}

#[derive(Debug)]
struct LeastSquaresObjective {
    data: Arc<LeastSquaresData>,
}

impl Objective for LeastSquaresObjective {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.data.value(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.data.gradient(x)
    }
}

/// Uniform row sampling: f(x, i) = (a_i^T x - b_i)^2.
#[derive(Debug)]
pub struct RowSampling {
    data: Arc<LeastSquaresData>,
}

impl StochasticOracle for RowSampling {
    fn draw(&self, stream: &mut RandomStream) -> StochasticSample {
        StochasticSample::Index(stream.next_index(self.data.len()))
    }

    fn value(&self, base: &dyn Objective, x: &[f64], xi: StochasticSample) -> f64 {
        match xi {
            StochasticSample::Index(i) => self.data.component_value(x, i),
            StochasticSample::Noise(_) => base.value(x),
        }
    }

    fn component_gradient(
        &self,
        _base: &dyn Objective,
        x: &[f64],
        xi: StochasticSample,
    ) -> Option<Vec<f64>> {
        match xi {
            StochasticSample::Index(i) => Some(self.data.component_gradient(x, i)),
            StochasticSample::Noise(_) => None,
        }
    }
}

/// Least-squares problem over `data` with a row-sampling oracle.
///
/// x* is the empirical minimizer, L and mu come from the Gram spectrum, and
/// sigma0 / sigma1 are the largest exact data variances found at the box
/// center and 64 seeded points on the box boundary.
pub fn least_squares_problem(data: LeastSquaresData) -> Result<Problem> {
    let d = data.dim();
    let gram = data.gram();
    let eig = gram.symmetric_eigenvalues();
    let lmax = eig.iter().copied().fold(f64::MIN, f64::max).max(0.0);
    let lmin = eig.iter().copied().fold(f64::MAX, f64::min).max(0.0);
    let x_star = data.solve();
    let f_star = data.value(&x_star);
    let start = vec![0.0; d];
    let radius = (2.0 * dist(&start, &x_star)).max(1.0);
    let l = 2.0 * lmax;
    let mu = 2.0 * lmin;

    let mut probe_stream = RandomStream::new(0x15A5_EED5);
    let mut s0: f64 = data.value_variance(&x_star);
    let mut s1: f64 = data.gradient_variance(&x_star);
    for _ in 0..64 {
        let u = sample_sphere(&mut probe_stream, d)?;
        let x: Vec<f64> = x_star
            .iter()
            .zip(&u.vector)
            .map(|(c, v)| c + radius * v)
            .collect();
        s0 = s0.max(data.value_variance(&x));
        s1 = s1.max(data.gradient_variance(&x));
    }
    let per_sample_l = data
        .rows
        .iter()
        .map(|a| 2.0 * norm_sq(a))
        .fold(0.0, f64::max);

    let data = Arc::new(data);
    Ok(Problem::new(
        "lsq",
        Arc::new(LeastSquaresObjective { data: data.clone() }),
        Constants {
            lipschitz: Some(l * radius),
            // stochastic smooth settings need every f(., i) to be L-smooth
            smoothness: Some(per_sample_l.max(l)),
            strong_convexity: Some(mu),
            minimizer: Some(x_star),
            f_star: Some(f_star),
            sigma0: Some(s0.sqrt()),
            sigma1: Some(s1.sqrt()),
            box_radius: radius,
        },
        ClassTags {
            convex: true,
            strongly_convex: mu > 1e-12,
            lipschitz: true,
            smooth: true,
            nonconvex: false,
        },
        start,
    )
    .with_oracle(Arc::new(RowSampling { data })))
}

pub fn make_least_squares(
    d: usize,
    m: usize,
    mode: RowMode,
    seed: u64,
) -> Result<(Problem, LeastSquaresData)> {
    let data = LeastSquaresData::generate(d, m, mode, &mut RandomStream::new(seed))?;
    Ok((least_squares_problem(data.clone())?, data))
}

// ---------------------------------------------------------------------------
// additive value noise

/// f(x, xi) = f(x) + sigma0 * z, z ~ N(0, 1).
#[derive(Debug)]
pub struct AdditiveNoise {
    pub sigma0: f64,
}

impl StochasticOracle for AdditiveNoise {
    fn draw(&self, stream: &mut RandomStream) -> StochasticSample {
        StochasticSample::Noise(stream.next_normal())
    }

    fn value(&self, base: &dyn Objective, x: &[f64], xi: StochasticSample) -> f64 {
        match xi {
            StochasticSample::Noise(z) => base.value(x) + self.sigma0 * z,
            StochasticSample::Index(_) => base.value(x),
        }
    }

    fn component_gradient(
        &self,
        base: &dyn Objective,
        x: &[f64],
        _xi: StochasticSample,
    ) -> Option<Vec<f64>> {
        Some(base.gradient(x))
    }
}

/// Attach additive Gaussian value noise; any previous oracle is replaced.
/// The per-sample gradient equals the true gradient, so sigma1 = 0.
pub fn add_value_noise(problem: Problem, sigma0: f64) -> Result<Problem> {
    if sigma0.is_nan() || sigma0 < 0.0 {
        return Err(ZoError::Parameter(format!(
            "sigma0 must be nonnegative (got {sigma0})"
        )));
    }
    let mut p = problem.with_oracle(Arc::new(AdditiveNoise { sigma0 }));
    p.constants.sigma0 = Some(sigma0);
    p.constants.sigma1 = Some(0.0);
    Ok(p)
}

// ---------------------------------------------------------------------------
// sigma estimation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaEstimate {
    pub sigma0_hat: f64,
    /// `None` when the oracle exposes no per-sample gradients.
    pub sigma1_hat: Option<f64>,
    pub probes: Vec<Vec<f64>>,
    pub value_variances: Vec<f64>,
    pub gradient_variances: Vec<Option<f64>>,
}

/// Empirical sup over `n_points` box probes (the box center first) of the
/// value variance and, when available, the per-sample gradient variance.
pub fn estimate_sigma(
    problem: &Problem,
    n_points: usize,
    n_draws: usize,
    stream: &mut RandomStream,
) -> Result<SigmaEstimate> {
    if !problem.has_oracle() {
        return Err(ZoError::Capability(format!(
            "problem {:?} has no stochastic oracle",
            problem.id()
        )));
    }
    if n_draws < 2 {
        return Err(ZoError::Parameter("n_draws must be at least 2".into()));
    }
    let mut probes = vec![problem.box_center()];
    while probes.len() < n_points.max(1) {
        probes.push(problem.sample_in_box(stream));
    }
    let mut value_variances = Vec::with_capacity(probes.len());
    let mut gradient_variances = Vec::with_capacity(probes.len());
    for x in &probes {
        let f = problem.value(x);
        let g = problem.gradient(x);
        let mut vstats = crate::mc::ScalarStats::default();
        let mut gsum = 0.0;
        let mut has_grad = true;
        for _ in 0..n_draws {
            let xi = problem.draw_sample(stream)?;
            let v = problem.value_at(x, xi)?;
            vstats.push(v - f);
            match problem.component_gradient(x, xi)? {
                Some(gi) => gsum += dist(&gi, &g).powi(2),
                None => has_grad = false,
            }
        }
        // variance around the known mean f(x)
        let n = n_draws as f64;
        let second = vstats.variance() * (n - 1.0) / n + vstats.mean().powi(2);
        value_variances.push(second);
        gradient_variances.push(has_grad.then(|| gsum / n));
    }
    let sigma0_hat = value_variances.iter().copied().fold(0.0, f64::max).sqrt();
    let sigma1_hat = if gradient_variances.iter().all(Option::is_some) {
        Some(
            gradient_variances
                .iter()
                .map(|v| v.unwrap_or(0.0))
                .fold(0.0, f64::max)
                .sqrt(),
        )
    } else {
        None
    };
    Ok(SigmaEstimate {
        sigma0_hat,
        sigma1_hat,
        probes,
        value_variances,
        gradient_variances,
    })
}

// ---------------------------------------------------------------------------
// registry

/// Flat parameter set accepted by every problem builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemParams {
    pub d: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub temperature: f64,
    pub m: usize,
    pub rows: RowMode,
    pub data_seed: u64,
    pub value: f64,
    /// Additive value noise; `None` leaves the problem deterministic
    /// (least squares keeps its row-sampling oracle).
    pub sigma0: Option<f64>,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            d: 8,
            mu: 1.0,
            l: 4.0,
            temperature: 1.0,
            m: 200,
            rows: RowMode::RademacherRows,
            data_seed: 0,
            value: 1.0,
            sigma0: None,
        }
    }
}

pub type ProblemBuilder = fn(&ProblemParams) -> Result<Problem>;

/// Problem constructors by string id.
pub struct ProblemRegistry {
    builders: BTreeMap<&'static str, ProblemBuilder>,
}

impl Default for ProblemRegistry {
    fn default() -> Self {
        let mut r = Self {
            builders: BTreeMap::new(),
        };
        r.register("norm", |p| make_norm_problem(p.d));
        r.register("quadratic", |p| make_quadratic_problem(p.d, p.mu, p.l));
        r.register("logsumexp", |p| make_logsumexp_problem(p.d, p.temperature));
        r.register("nonconvex", |p| make_nonconvex_problem(p.d));
        r.register("lsq", |p| {
            make_least_squares(p.d, p.m, p.rows, p.data_seed).map(|(prob, _)| prob)
        });
        r.register("constant", |p| make_constant_problem(p.d, p.value));
        r
    }
}

impl ProblemRegistry {
    pub fn register(&mut self, id: &'static str, builder: ProblemBuilder) {
        self.builders.insert(id, builder);
    }

    pub fn ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn build(&self, id: &str, params: &ProblemParams) -> Result<Problem> {
        let builder = self.builders.get(id).ok_or_else(|| ZoError::UnknownId {
            kind: "problem",
            id: id.to_string(),
        })?;
        let problem = builder(params)?;
        match params.sigma0 {
            Some(s) => add_value_noise(problem, s),
            None => Ok(problem),
        }
    }
}
