//! Zeroth-order gradient estimators.
//!
//! Every estimator sees the objective only through an [`Oracle`], which
//! counts queries and, in stochastic mode, draws a fresh noise sample per
//! query from its own stream.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Result, ZoError};
use crate::linalg::{add_scaled, scale};
use crate::problems::Problem;
use crate::rng::{sample, Distribution, RandomStream};

/// Value oracle with a query counter.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    problem: &'a Problem,
    noise: Option<RandomStream>,
    queries: u64,
}

impl<'a> Oracle<'a> {
    pub fn deterministic(problem: &'a Problem) -> Self {
        Self {
            problem,
            noise: None,
            queries: 0,
        }
    }

    /// Every query draws a fresh sample from `noise`.
    pub fn stochastic(problem: &'a Problem, noise: RandomStream) -> Result<Self> {
        if !problem.has_oracle() {
            return Err(ZoError::Capability(format!(
                "problem {:?} has no stochastic oracle",
                problem.id()
            )));
        }
        Ok(Self {
            problem,
            noise: Some(noise),
            queries: 0,
        })
    }

    pub fn query(&mut self, x: &[f64]) -> f64 {
        self.queries += 1;
        match &mut self.noise {
            None => self.problem.value(x),
            Some(s) => self
                .problem
                .noisy_value(x, s)
                .expect("oracle presence checked at construction"),
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn is_stochastic(&self) -> bool {
        self.noise.is_some()
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    pub queries_used: u32,
    pub alpha: f64,
}

/// Memory of the residual estimator.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EstimatorState {
    /// Last perturbed (possibly noisy) value f(x_{t-1} + alpha u_{t-1}).
    pub prev_value: f64,
    pub prev_direction: Vec<f64>,
    pub initialized: bool,
}

pub trait GradientEstimator: Send + fmt::Debug {
    fn id(&self) -> &'static str;

    fn distribution(&self) -> Distribution;

    fn estimate(
        &mut self,
        oracle: &mut Oracle,
        x: &[f64],
        alpha: f64,
        directions: &mut RandomStream,
    ) -> Result<GradientEstimate>;

    /// Carry-over memory, for stateful estimators.
    fn state(&self) -> Option<&EstimatorState> {
        None
    }

    fn reset(&mut self) {}
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(ZoError::Parameter(format!(
            "smoothing radius must be positive (got {alpha})"
        )))
    }
}

fn direction(dist: Distribution, s: &mut RandomStream, d: usize) -> Result<Vec<f64>> {
    Ok(sample(dist, s, d)?.vector)
}

/// `d (new - prev) / alpha * u`, the residual-feedback direction estimate.
pub fn residual_vector(
    d: usize,
    alpha: f64,
    new_value: f64,
    prev_value: f64,
    u: &[f64],
) -> Vec<f64> {
    scale(u, d as f64 * (new_value - prev_value) / alpha)
}

/// One-point estimator with Rademacher directions: `f(x + alpha u) / alpha * u`.
#[derive(Debug, Default, Clone)]
pub struct Spsa1;

impl GradientEstimator for Spsa1 {
    fn id(&self) -> &'static str {
        "spsa1"
    }

    fn distribution(&self) -> Distribution {
        Distribution::Rademacher
    }

    fn estimate(
        &mut self,
        oracle: &mut Oracle,
        x: &[f64],
        alpha: f64,
        dirs: &mut RandomStream,
    ) -> Result<GradientEstimate> {
        check_alpha(alpha)?;
        let u = direction(Distribution::Rademacher, dirs, x.len())?;
        let v = oracle.query(&add_scaled(x, alpha, &u));
        Ok(GradientEstimate {
            vector: scale(&u, v / alpha),
            queries_used: 1,
            alpha,
        })
    }
}

/// One-point estimator with sphere directions: `d f(x + alpha u) / alpha * u`.
#[derive(Debug, Default, Clone)]
pub struct OnePoint;

impl GradientEstimator for OnePoint {
    fn id(&self) -> &'static str {
        "one_point"
    }

    fn distribution(&self) -> Distribution {
        Distribution::UnitSphere
    }

    fn estimate(
        &mut self,
        oracle: &mut Oracle,
        x: &[f64],
        alpha: f64,
        dirs: &mut RandomStream,
    ) -> Result<GradientEstimate> {
        check_alpha(alpha)?;
        let d = x.len();
        let u = direction(Distribution::UnitSphere, dirs, d)?;
        let v = oracle.query(&add_scaled(x, alpha, &u));
        Ok(GradientEstimate {
            vector: scale(&u, d as f64 * v / alpha),
            queries_used: 1,
            alpha,
        })
    }
}

/// Two-point estimator: `d (f(x + alpha u) - f(x)) / alpha * u`.
#[derive(Debug, Default, Clone)]
pub struct TwoPoint;

impl GradientEstimator for TwoPoint {
    fn id(&self) -> &'static str {
        "two_point"
    }

    fn distribution(&self) -> Distribution {
        Distribution::UnitSphere
    }

    fn estimate(
        &mut self,
        oracle: &mut Oracle,
        x: &[f64],
        alpha: f64,
        dirs: &mut RandomStream,
    ) -> Result<GradientEstimate> {
        check_alpha(alpha)?;
        let d = x.len();
        let u = direction(Distribution::UnitSphere, dirs, d)?;
        let plus = oracle.query(&add_scaled(x, alpha, &u));
        let base = oracle.query(x);
        Ok(GradientEstimate {
            vector: residual_vector(d, alpha, plus, base, &u),
            queries_used: 2,
            alpha,
        })
    }
}

/// One-point residual feedback.
///
/// The first call queries `f(x + alpha u_0)`, stores it and returns the zero
/// vector. Later calls return `d (f(x_t + alpha u_t) - prev) / alpha * u_t`
/// with one new query each. In stochastic mode `prev` is the stored noisy
/// value; it is never re-queried.
#[derive(Debug, Clone, Default)]
pub struct Residual {
    state: EstimatorState,
    gaussian: bool,
}

impl Residual {
    pub fn sphere() -> Self {
        Self::default()
    }

    /// Gaussian directions without the `d` factor.
    pub fn gaussian() -> Self {
        Self {
            state: EstimatorState::default(),
            gaussian: true,
        }
    }

    pub fn with_state(mut self, state: EstimatorState) -> Self {
        self.state = state;
        self
    }
}

impl GradientEstimator for Residual {
    fn id(&self) -> &'static str {
        if self.gaussian {
            "residual_gaussian"
        } else {
            "residual"
        }
    }

    fn distribution(&self) -> Distribution {
        if self.gaussian {
            Distribution::StandardGaussian
        } else {
            Distribution::UnitSphere
        }
    }

    fn estimate(
        &mut self,
        oracle: &mut Oracle,
        x: &[f64],
        alpha: f64,
        dirs: &mut RandomStream,
    ) -> Result<GradientEstimate> {
        check_alpha(alpha)?;
        let d = x.len();
        let u = direction(self.distribution(), dirs, d)?;
        let v = oracle.query(&add_scaled(x, alpha, &u));
        let vector = if !self.state.initialized {
            vec![0.0; d]
        } else if self.gaussian {
            scale(&u, (v - self.state.prev_value) / alpha)
        } else {
            residual_vector(d, alpha, v, self.state.prev_value, &u)
        };
        self.state = EstimatorState {
            prev_value: v,
            prev_direction: u,
            initialized: true,
        };
        Ok(GradientEstimate {
            vector,
            queries_used: 1,
            alpha,
        })
    }

    fn state(&self) -> Option<&EstimatorState> {
        Some(&self.state)
    }

    fn reset(&mut self) {
        self.state = EstimatorState::default();
    }
}

fn oracle_for<'a>(
    problem: &'a Problem,
    stream: &mut RandomStream,
    noisy: bool,
) -> Result<Oracle<'a>> {
    if noisy {
        Oracle::stochastic(problem, stream.fork())
    } else {
        Ok(Oracle::deterministic(problem))
    }
}

pub fn spsa1(
    problem: &Problem,
    x: &[f64],
    alpha: f64,
    stream: &mut RandomStream,
) -> Result<GradientEstimate> {
    Spsa1.estimate(&mut Oracle::deterministic(problem), x, alpha, stream)
}

pub fn bandit_one_point(
    problem: &Problem,
    x: &[f64],
    alpha: f64,
    stream: &mut RandomStream,
    noisy: bool,
) -> Result<GradientEstimate> {
    let mut oracle = oracle_for(problem, stream, noisy)?;
    OnePoint.estimate(&mut oracle, x, alpha, stream)
}

pub fn two_point(
    problem: &Problem,
    x: &[f64],
    alpha: f64,
    stream: &mut RandomStream,
) -> Result<GradientEstimate> {
    TwoPoint.estimate(&mut Oracle::deterministic(problem), x, alpha, stream)
}

/// Functional form of [`Residual`]: consumes the state, returns the new one.
pub fn residual_step(
    problem: &Problem,
    x: &[f64],
    alpha: f64,
    state: EstimatorState,
    stream: &mut RandomStream,
    noisy: bool,
) -> Result<(GradientEstimate, EstimatorState)> {
    let mut oracle = oracle_for(problem, stream, noisy)?;
    let mut est = Residual::sphere().with_state(state);
    let g = est.estimate(&mut oracle, x, alpha, stream)?;
    Ok((g, est.state))
}

pub type EstimatorFactory = fn() -> Box<dyn GradientEstimator>;

/// Estimator constructors by string id.
pub struct EstimatorRegistry {
    factories: BTreeMap<&'static str, EstimatorFactory>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("spsa1", || Box::new(Spsa1));
        r.register("one_point", || Box::new(OnePoint));
        r.register("two_point", || Box::new(TwoPoint));
        r.register("residual", || Box::new(Residual::sphere()));
        r.register("residual_gaussian", || Box::new(Residual::gaussian()));
        r
    }
}

impl EstimatorRegistry {
    pub fn register(&mut self, id: &'static str, factory: EstimatorFactory) {
        self.factories.insert(id, factory);
    }

    pub fn ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn create(&self, id: &str) -> Result<Box<dyn GradientEstimator>> {
        self.factories
            .get(id)
            .map(|f| f())
            .ok_or_else(|| ZoError::UnknownId {
                kind: "estimator",
                id: id.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_sq, sub};
    use crate::mc::{par_scalar, par_vector, ScalarStats};
    use crate::problems::{
        add_value_noise, make_affine_problem, make_constant_problem, make_quadratic_problem,
    };

    const N: usize = 1_000_000;

    fn second_moment<F>(n: usize, seed: u64, f: F) -> ScalarStats
    where
        F: Fn(&mut RandomStream) -> Vec<f64> + Sync,
    {
        par_scalar(&mut RandomStream::new(seed), n, |s| norm_sq(&f(s)))
    }

    #[test]
    fn spsa1_constant_second_moment() {
        // ||G||^2 = d / alpha^2 exactly for f = 1
        let p = make_constant_problem(4, 1.0).unwrap();
        let st = second_moment(10_000, 1, |s| spsa1(&p, &[0.0; 4], 0.1, s).unwrap().vector);
        assert!((st.mean() - 400.0).abs() < 1e-9);
    }

    #[test]
    fn spsa1_zero_function_and_errors() {
        let p = make_constant_problem(3, 0.0).unwrap();
        let g = spsa1(&p, &[1.0; 3], 0.1, &mut RandomStream::new(0)).unwrap();
        assert!(g.vector.iter().all(|v| *v == 0.0));
        assert_eq!(g.queries_used, 1);
        assert!(matches!(
            spsa1(&p, &[1.0; 3], 0.0, &mut RandomStream::new(0)),
            Err(ZoError::Parameter(_))
        ));
    }

    #[test]
    fn spsa1_linear_mean() {
        let c = vec![1.0, -2.0, 0.5];
        let p = make_affine_problem(c.clone(), 0.0).unwrap();
        let st = par_vector(&mut RandomStream::new(2), N, 3, |s, out| {
            out.copy_from_slice(&spsa1(&p, &[0.0; 3], 0.1, s).unwrap().vector)
        });
        for ((m, se), t) in st.mean().iter().zip(st.std_err()).zip(&c) {
            assert!((m - t).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn one_point_constant_second_moment() {
        let p = make_constant_problem(4, 1.0).unwrap();
        let st = second_moment(10_000, 3, |s| {
            bandit_one_point(&p, &[0.0; 4], 0.1, s, false)
                .unwrap()
                .vector
        });
        assert!((st.mean() - 1600.0).abs() < 1e-8);
    }

    #[test]
    fn one_point_quadratic_mean_is_gradient() {
        let p = make_quadratic_problem(3, 1.0, 2.0).unwrap();
        let x = [0.5, -0.5, 1.0];
        let st = par_vector(&mut RandomStream::new(4), N, 3, |s, out| {
            out.copy_from_slice(&bandit_one_point(&p, &x, 0.2, s, false).unwrap().vector)
        });
        for ((m, se), t) in st.mean().iter().zip(st.std_err()).zip(p.gradient(&x)) {
            assert!((m - t).abs() <= 5.0 * se, "{m} vs {t}");
        }
    }

    #[test]
    fn one_point_noisy_needs_oracle() {
        let p = make_constant_problem(2, 1.0).unwrap();
        assert!(matches!(
            bandit_one_point(&p, &[0.0; 2], 0.1, &mut RandomStream::new(0), true),
            Err(ZoError::Capability(_))
        ));
    }

    #[test]
    fn two_point_linear_second_moment() {
        // E||d (c^T u) u||^2 = d ||c||^2
        let c = vec![1.0, 2.0, -1.0, 0.5];
        let p = make_affine_problem(c.clone(), 3.0).unwrap();
        let st = second_moment(N, 5, |s| two_point(&p, &[0.1; 4], 0.1, s).unwrap().vector);
        let expected = 4.0 * norm_sq(&c);
        assert!((st.mean() - expected).abs() <= 3.0 * st.std_err());
    }

    #[test]
    fn two_point_constant_is_zero_and_uses_two_queries() {
        let p = make_constant_problem(3, 5.0).unwrap();
        let g = two_point(&p, &[1.0; 3], 0.1, &mut RandomStream::new(0)).unwrap();
        assert!(g.vector.iter().all(|v| *v == 0.0));
        assert_eq!(g.queries_used, 2);
    }

    #[test]
    fn two_point_quadratic_mean() {
        let p = make_quadratic_problem(3, 1.0, 3.0).unwrap();
        let x = [0.2, 0.4, -0.6];
        let st = par_vector(&mut RandomStream::new(6), N, 3, |s, out| {
            out.copy_from_slice(&two_point(&p, &x, 0.1, s).unwrap().vector)
        });
        for ((m, se), t) in st.mean().iter().zip(st.std_err()).zip(p.gradient(&x)) {
            assert!((m - t).abs() <= 5.0 * se);
        }
    }

    #[test]
    fn residual_initialization() {
        let p = make_quadratic_problem(3, 1.0, 2.0).unwrap();
        let x1 = p.start().to_vec();
        let mut s = RandomStream::new(7);
        let replay = s.clone();
        let (g, state) =
            residual_step(&p, &x1, 0.1, EstimatorState::default(), &mut s, false).unwrap();
        assert!(g.vector.iter().all(|v| *v == 0.0));
        assert!(state.initialized);
        let u0 = sample(Distribution::UnitSphere, &mut replay.clone(), 3)
            .unwrap()
            .vector;
        assert_eq!(state.prev_direction, u0);
        assert_eq!(state.prev_value, p.value(&add_scaled(&x1, 0.1, &u0)));
    }

    #[test]
    fn residual_of_constant_is_zero() {
        let p = make_constant_problem(4, 3.0).unwrap();
        let mut est = Residual::sphere();
        let mut o = Oracle::deterministic(&p);
        let mut s = RandomStream::new(8);
        for _ in 0..50 {
            let g = est.estimate(&mut o, &[0.5; 4], 0.1, &mut s).unwrap();
            assert!(g.vector.iter().all(|v| *v == 0.0));
        }
        assert_eq!(o.queries(), 50);
    }

    #[test]
    fn residual_conditional_mean_is_smoothed_gradient() {
        let p = make_quadratic_problem(4, 1.0, 4.0).unwrap();
        let x = [0.3, -0.1, 0.2, 0.4];
        let state = EstimatorState {
            prev_value: 1.7,
            prev_direction: vec![1.0, 0.0, 0.0, 0.0],
            initialized: true,
        };
        let st = par_vector(&mut RandomStream::new(9), N, 4, |s, out| {
            let (g, _) = residual_step(&p, &x, 0.1, state.clone(), s, false).unwrap();
            out.copy_from_slice(&g.vector);
        });
        for ((m, se), t) in st.mean().iter().zip(st.std_err()).zip(p.gradient(&x)) {
            assert!((m - t).abs() <= 5.0 * se, "{m} vs {t}");
        }
    }

    #[test]
    fn stochastic_residual_reuses_stored_value() {
        let p = add_value_noise(make_constant_problem(2, 0.0).unwrap(), 1.0).unwrap();
        let mut o = Oracle::stochastic(&p, RandomStream::new(11)).unwrap();
        let mut est = Residual::sphere();
        let mut s = RandomStream::new(12);
        est.estimate(&mut o, &[0.0; 2], 0.5, &mut s).unwrap();
        let prev = est.state().unwrap().prev_value;
        let g = est.estimate(&mut o, &[0.0; 2], 0.5, &mut s).unwrap();
        let st = est.state().unwrap();
        let expect = residual_vector(2, 0.5, st.prev_value, prev, &st.prev_direction);
        assert_eq!(g.vector, expect);
        assert_eq!(o.queries(), 2);
    }

    #[test]
    fn gaussian_ablation_has_no_dimension_factor() {
        let c = vec![1.0, 0.0, 0.0];
        let p = make_affine_problem(c, 0.0).unwrap();
        let mut est = Residual::gaussian().with_state(EstimatorState {
            prev_value: 0.0,
            prev_direction: vec![],
            initialized: true,
        });
        let mut s = RandomStream::new(13);
        let replay = s.clone();
        let g = est
            .estimate(&mut Oracle::deterministic(&p), &[0.0; 3], 0.5, &mut s)
            .unwrap();
        let u = sample(Distribution::StandardGaussian, &mut replay.clone(), 3)
            .unwrap()
            .vector;
        let expect = scale(&u, u[0]);
        assert!(norm_sq(&sub(&g.vector, &expect)) < 1e-24);
    }

    #[test]
    fn registry_round_trip() {
        let reg = EstimatorRegistry::default();
        for id in reg.ids().collect::<Vec<_>>() {
            assert_eq!(reg.create(id).unwrap().id(), id);
        }
        assert!(reg.create("momentum").is_err());
    }
}
