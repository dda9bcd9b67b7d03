use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZoError};
use crate::linalg::dist;
use crate::problems::Problem;

/// The ten (deterministic | stochastic) x (regularity class) cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    DetNonsmoothCvx,
    DetNonsmoothScvx,
    DetSmoothCvx,
    DetSmoothScvx,
    DetSmoothNoncvx,
    StoNonsmoothCvx,
    StoNonsmoothScvx,
    StoSmoothCvx,
    StoSmoothScvx,
    StoSmoothNoncvx,
}

/// How iterates are combined into the reported output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Last,
    UniformMean,
    RhoWeighted,
}

/// The quantity a run reports as `final_metric`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// (1/T) sum_t f(x_t) - f*
    MeanGap,
    /// f(weighted average) - f*
    WeightedPointGap,
    /// f(x_{T+1}) - f*
    LastGap,
    /// (1/T) sum_t ||grad f(x_t)||^2
    MeanGradNormSq,
}

impl Setting {
    pub const ALL: [Setting; 10] = [
        Setting::DetNonsmoothCvx,
        Setting::DetNonsmoothScvx,
        Setting::DetSmoothCvx,
        Setting::DetSmoothScvx,
        Setting::DetSmoothNoncvx,
        Setting::StoNonsmoothCvx,
        Setting::StoNonsmoothScvx,
        Setting::StoSmoothCvx,
        Setting::StoSmoothScvx,
        Setting::StoSmoothNoncvx,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Setting::DetNonsmoothCvx => "det_nonsmooth_cvx",
            Setting::DetNonsmoothScvx => "det_nonsmooth_scvx",
            Setting::DetSmoothCvx => "det_smooth_cvx",
            Setting::DetSmoothScvx => "det_smooth_scvx",
            Setting::DetSmoothNoncvx => "det_smooth_noncvx",
            Setting::StoNonsmoothCvx => "sto_nonsmooth_cvx",
            Setting::StoNonsmoothScvx => "sto_nonsmooth_scvx",
            Setting::StoSmoothCvx => "sto_smooth_cvx",
            Setting::StoSmoothScvx => "sto_smooth_scvx",
            Setting::StoSmoothNoncvx => "sto_smooth_noncvx",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Setting::StoNonsmoothCvx
                | Setting::StoNonsmoothScvx
                | Setting::StoSmoothCvx
                | Setting::StoSmoothScvx
                | Setting::StoSmoothNoncvx
        )
    }

    /// Whether the schedule is parameterized by T (otherwise by epsilon).
    pub fn takes_horizon(self) -> bool {
        !matches!(
            self,
            Setting::DetNonsmoothScvx
                | Setting::DetSmoothScvx
                | Setting::StoNonsmoothScvx
                | Setting::StoSmoothScvx
        )
    }

    pub fn averaging(self) -> Averaging {
        match self {
            Setting::DetNonsmoothScvx | Setting::StoNonsmoothScvx => Averaging::RhoWeighted,
            Setting::DetSmoothScvx | Setting::StoSmoothScvx => Averaging::Last,
            _ => Averaging::UniformMean,
        }
    }

    pub fn metric(self) -> Metric {
        match self {
            Setting::DetSmoothNoncvx | Setting::StoSmoothNoncvx => Metric::MeanGradNormSq,
            _ => match self.averaging() {
                Averaging::RhoWeighted => Metric::WeightedPointGap,
                Averaging::Last => Metric::LastGap,
                Averaging::UniformMean => Metric::MeanGap,
            },
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Setting {
    type Err = ZoError;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| ZoError::UnknownId {
                kind: "setting",
                id: s.to_string(),
            })
    }
}

/// Iteration budget requested for a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Run exactly T steps.
    Horizon(usize),
    /// Target precision; T follows from the setting's complexity formula.
    Precision(f64),
    /// Target precision with an explicit horizon that replaces the formula.
    PrecisionWithHorizon { epsilon: f64, horizon: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub setting: Setting,
    pub eta: f64,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub averaging: Averaging,
    pub metric: Metric,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    /// T(epsilon) from the complexity formula, when epsilon is known.
    pub formula_horizon: Option<f64>,
    pub c0: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Schedule {
    /// Explicit parameters, bypassing the formulas.
    pub fn manual(setting: Setting, eta: f64, alpha: f64, horizon: usize) -> Result<Self> {
        let s = Self {
            setting,
            eta,
            alpha,
            horizon,
            averaging: setting.averaging(),
            metric: setting.metric(),
            rho: None,
            epsilon: None,
            formula_horizon: None,
            c0: DEFAULT_C0,
            warnings: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ZoError::Parameter(format!(
                "step size must be positive (got {})",
                self.eta
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ZoError::Parameter(format!(
                "smoothing radius must be positive (got {})",
                self.alpha
            )));
        }
        if self.horizon == 0 {
            return Err(ZoError::Parameter("T must be at least 1".into()));
        }
        if self.averaging == Averaging::RhoWeighted {
            match self.rho {
                Some(r) if r > 0.0 && r < 1.0 => {}
                other => {
                    return Err(ZoError::Parameter(format!(
                        "rho-weighted averaging needs 0 < rho < 1 (got {other:?})"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Replace eta and/or alpha. For rho-weighted averaging rho is recomputed
    /// from the new eta, so `mu` must be supplied in that case.
    pub fn with_overrides(
        mut self,
        eta: Option<f64>,
        alpha: Option<f64>,
        mu: Option<f64>,
    ) -> Result<Self> {
        if let Some(a) = alpha {
            self.alpha = a;
        }
        if let Some(e) = eta {
            self.eta = e;
        }
        if self.averaging == Averaging::RhoWeighted && eta.is_some() {
            let mu = mu.ok_or(ZoError::MissingConstant("mu"))?;
            self.rho = Some(1.0 - mu * self.eta / 2.0);
        }
        if eta.is_some() || alpha.is_some() {
            self.warnings.push("eta/alpha overridden by caller".into());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    /// w_t = rho^{-t} for t = 1..=T (uniform weights unless rho-weighted).
    /// Overflows for large T; [`crate::optimizer::weighted_average`] and the
    /// run loop work with normalized weights instead.
    pub fn weights(&self) -> Vec<f64> {
        match (self.averaging, self.rho) {
            (Averaging::RhoWeighted, Some(rho)) => {
                (1..=self.horizon).map(|t| rho.powi(-(t as i32))).collect()
            }
            _ => vec![1.0; self.horizon],
        }
    }
}

/// Fallback for the fourth-moment constant when no measured value is cached.
pub const DEFAULT_C0: f64 = 1.0;

/// Largest horizon a formula may produce.
pub const MAX_HORIZON: f64 = 1e10;

fn horizon_from(t: f64) -> Result<usize> {
    if !(t.is_finite() && t <= MAX_HORIZON) {
        return Err(ZoError::Parameter(format!(
            "complexity formula gives T = {t:e}, beyond the supported maximum"
        )));
    }
    Ok(t.ceil().max(1.0) as usize)
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ZoError::Constant(format!(
            "{name} must be positive here (got {v})"
        )))
    }
}

/// Build the schedule prescribed for `setting`.
///
/// `x1` is the start point (it enters through `||x1 - x*||` or
/// `f(x1) - f*`); `c0` is the fourth-moment constant, defaulting to
/// [`DEFAULT_C0`]. Horizons below a setting's validity floor, and precisions
/// outside its stated range, are recorded as warnings and do not fail.
pub fn make_schedule(
    setting: Setting,
    problem: &Problem,
    budget: Budget,
    x1: &[f64],
    c0: Option<f64>,
) -> Result<Schedule> {
    let c = &problem.constants;
    let c0 = c0.unwrap_or(DEFAULT_C0);
    let d = problem.dim() as f64;
    let l0 = positive("L0", c.l0()?)?;

    let (epsilon, given_t) = match budget {
        Budget::Horizon(t) => (None, Some(t)),
        Budget::Precision(e) => (Some(e), None),
        Budget::PrecisionWithHorizon { epsilon, horizon } => (Some(epsilon), Some(horizon)),
    };
    if let Some(e) = epsilon {
        if !(e > 0.0 && e.is_finite()) {
            return Err(ZoError::Parameter(format!(
                "epsilon must be positive (got {e})"
            )));
        }
    }
    if !setting.takes_horizon() && epsilon.is_none() {
        return Err(ZoError::Parameter(format!(
            "setting {setting} is parameterized by epsilon; T alone is not enough"
        )));
    }

    let r1 = || -> Result<f64> { Ok(dist(x1, c.x_star()?)) };
    let delta = || -> Result<f64> { Ok(problem.value(x1) - c.f_star()?) };
    let sigma0 = || -> Result<f64> { c.sigma0() };
    let mut warnings = Vec::new();

    // resolve the horizon: explicit T, else the complexity formula
    let resolve = |formula: Option<f64>| -> Result<usize> {
        match (given_t, formula) {
            (Some(t), _) => Ok(t),
            (None, Some(f)) => horizon_from(f),
            (None, None) => Err(ZoError::Parameter("need T or epsilon".into())),
        }
    };

    let (eta, alpha, horizon, formula, rho);
    match setting {
        Setting::DetNonsmoothCvx => {
            let r1 = r1()?;
            formula = epsilon.map(|e| {
                [
                    81.0 * r1 * r1 * l0 * l0,
                    144.0 * c0 * c0 * l0 * l0,
                    9.0 * l0 * l0,
                ]
                .into_iter()
                .fold(0.0, f64::max)
                    * d
                    / (e * e)
            });
            horizon = resolve(formula)?;
            let t = horizon as f64;
            alpha = (d / t).sqrt();
            eta = 1.0 / (3.0 * (d * t).sqrt() * l0);
            rho = None;
        }
        Setting::DetNonsmoothScvx => {
            let e = epsilon.expect("checked above");
            let mu = c.mu()?;
            let r1 = r1()?;
            alpha = e / (2.0 * (4.0 * c0 + 1.0) * l0);
            eta = alpha / (3.0 * d * l0);
            rho = Some(1.0 - mu * eta / 2.0);
            formula = Some(
                6.0 * (4.0 * c0 + 1.0) * l0 * l0 * d / (mu * e) * (mu * r1 * r1 / e + 1.0).ln(),
            );
            horizon = resolve(formula)?;
        }
        Setting::DetSmoothCvx => {
            let l = positive("L", c.l()?)?;
            let r1 = r1()?;
            formula = epsilon.map(|e| {
                f64::max(
                    10f64.powf(1.5) * r1 * r1 * l * l0.sqrt() * d / e.powf(1.5),
                    8f64.powf(0.75) * l0 * r1.sqrt() / l.powf(0.25) * d.powf(0.25) / e.powf(0.75),
                )
            });
            horizon = resolve(formula)?;
            let t = horizon as f64;
            let floor = 4096.0 * r1 * r1 * d.powi(4) * (l / l0).powi(2);
            if t < floor {
                warnings.push(format!(
                    "T = {horizon} is below the validity floor {floor:.3e}"
                ));
            }
            alpha = positive("||x1 - x*||", r1)?.powf(2.0 / 3.0) * (d * l0 / (t * l)).cbrt();
            eta = f64::min(alpha / (4.0 * d * l0), 1.0 / (64.0 * d * l));
            rho = None;
        }
        Setting::DetSmoothScvx => {
            let e = epsilon.expect("checked above");
            let l = positive("L", c.l()?)?;
            let mu = c.mu()?;
            let delta = delta()?;
            let limit = 9.0 * l0 * l0 * mu * mu / (196.0 * d * d * l.powi(3));
            if e > limit {
                warnings.push(format!(
                    "epsilon = {e} exceeds the stated range {limit:.3e}"
                ));
            }
            alpha = (e / (9.0 * l)).sqrt();
            eta = f64::min(alpha / (4.0 * d * l0), 1.0 / (56.0 * d * l));
            formula =
                Some(12.0 * d * l0 * l.sqrt() / (mu * e.sqrt()) * (3.0 * delta / e).ln().max(0.0));
            horizon = resolve(formula)?;
            rho = None;
        }
        Setting::DetSmoothNoncvx => {
            let l = positive("L", c.l()?)?;
            let delta = positive("f(x1) - f*", delta()?)?;
            formula = epsilon.map(|e| 24f64.powf(1.5) * d * l0 * l * delta / e.powi(3));
            horizon = resolve(formula)?;
            let t = horizon as f64;
            let floor = [
                6f64.powf(1.5) * d * l0 / (delta.sqrt() * l.sqrt()),
                125.0 * d.powi(4) * delta / (l * l * l0 * l0),
                64.0 * l * d.powi(4) * delta / (l0 * l0),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            if t < floor {
                warnings.push(format!(
                    "T = {horizon} is below the validity floor {floor:.3e}"
                ));
            }
            alpha = (d * l0 * delta / (l * l * t)).cbrt();
            eta = f64::min(alpha / (4.0 * d * l0), 1.0 / (16.0 * d * l));
            rho = None;
        }
        Setting::StoNonsmoothCvx => {
            let s0 = positive("sigma0", sigma0()?)?;
            let r1 = positive("||x1 - x*||", r1()?)?;
            formula = epsilon.map(|e| {
                96.0 * l0
                    * l0
                    * r1
                    * r1
                    * f64::max(16.0 * d * d * s0 * s0 / e.powi(4), d * c0 / (e * e))
            });
            horizon = resolve(formula)?;
            let t = horizon as f64;
            if c0 > 0.0 {
                let floor = 3.0 * l0 * l0 * r1 * r1 / (2048.0 * c0 * c0 * s0 * s0);
                if t < floor {
                    warnings.push(format!(
                        "T = {horizon} is below the validity floor {floor:.3e}"
                    ));
                }
            }
            alpha =
                96f64.powf(0.25) * d.sqrt() * s0.sqrt() * r1.sqrt() / (l0.sqrt() * t.powf(0.25));
            let raw = r1 * alpha
                / ((24.0 * d * t).sqrt() * (c0 * l0 * l0 * alpha * alpha + d * s0 * s0).sqrt());
            eta = f64::min(raw, alpha / (3.0 * d * l0));
            rho = None;
        }
        Setting::StoNonsmoothScvx => {
            let e = epsilon.expect("checked above");
            let s0 = positive("sigma0", sigma0()?)?;
            let mu = c.mu()?;
            let r1 = r1()?;
            let limit = 4.0 * (8.0 * d * (8.0 * c0 + 1.0)).sqrt() * s0;
            if e >= limit {
                warnings.push(format!(
                    "epsilon = {e} exceeds the stated range {limit:.3e}"
                ));
            }
            let second = if c0 > 0.0 {
                (d * s0 * s0 * e / (4.0 * c0 * l0.powi(3))).cbrt()
            } else {
                f64::INFINITY
            };
            alpha = f64::min(e / (8.0 * l0), second);
            eta = f64::min(
                l0 * alpha.powi(3) / (24.0 * d * d * s0 * s0),
                alpha / (3.0 * d * l0),
            );
            rho = Some(1.0 - mu * eta / 2.0);
            formula = Some(
                48.0 * l0 * l0 / mu
                    * f64::max(512.0 * d * d * s0 * s0 / e.powi(3), 4.0 * c0 * d / e)
                    * (mu * r1 * r1 / e + 1.0).ln(),
            );
            horizon = resolve(formula)?;
        }
        Setting::StoSmoothCvx => {
            let s0 = positive("sigma0", sigma0()?)?;
            let s1 = c.sigma1()?;
            let l = positive("L", c.l()?)?;
            let r1 = positive("||x1 - x*||", r1()?)?;
            formula = epsilon.map(|e| {
                f64::max(
                    1728.0 * l * d * d * r1 * r1 * s0 * s0 / e.powi(3),
                    2f64.powf(10.5) * d.sqrt() * r1 * r1 * s1.powi(3)
                        / (l.sqrt() * s0 * e.powf(1.5)),
                )
            });
            horizon = resolve(formula)?;
            let t = horizon as f64;
            let mut floors = vec![
                20f64.powf(1.5) * l * r1 * r1 / (s0 * d.powi(4)),
                l0 * l0 * r1 * r1 / (s0 * s0),
                2f64.powf(3.5) * l * d.sqrt() * r1 * r1 / s0,
            ];
            if s1 > 0.0 {
                floors.push(l0 * l0 / (4.0 * s1 * s1));
            }
            let floor = floors.into_iter().fold(0.0, f64::max);
            if t < floor {
                warnings.push(format!(
                    "T = {horizon} is below the validity floor {floor:.3e}"
                ));
            }
            alpha = 4.0 * (d * r1 * s0 / l).cbrt() / t.powf(1.0 / 6.0);
            let raw = alpha * r1 / (8.0 * t.sqrt() * d * s0);
            eta = raw.min(alpha / (8.0 * d * l0)).min(1.0 / (64.0 * d * l));
            rho = None;
        }
        Setting::StoSmoothScvx => {
            let e = epsilon.expect("checked above");
            let s0 = positive("sigma0", sigma0()?)?;
            let s1 = c.sigma1()?;
            let l = positive("L", c.l()?)?;
            let mu = c.mu()?;
            let delta = delta()?;
            let limit = if s1 > 0.0 {
                f64::min(64.0 * s0, 16.0 * s1 * s1 / (d * l))
            } else {
                64.0 * s0
            };
            if e > limit {
                warnings.push(format!(
                    "epsilon = {e} exceeds the stated range {limit:.3e}"
                ));
            }
            let second = if s1 > 0.0 {
                (d * s0 * s0 * e / (4.0 * l * s1 * s1)).sqrt()
            } else {
                f64::INFINITY
            };
            alpha = f64::min(e / (32.0 * l), second).sqrt();
            let raw = mu * alpha.powi(4) / (48.0 * d * d * s0 * s0);
            eta = raw.min(alpha / (8.0 * d * l0)).min(1.0 / (112.0 * d * l));
            formula = Some(
                f64::max(
                    3.0 * 16384.0 * l * l * d * d * s0 * s0 / (mu * mu * e * e),
                    192.0 * d * l * s1 * s1 / (mu * mu * e),
                ) * (3.0 * delta / e).ln().max(0.0),
            );
            horizon = resolve(formula)?;
            rho = None;
        }
        Setting::StoSmoothNoncvx => {
            let s0 = positive("sigma0", sigma0()?)?;
            let s1 = c.sigma1()?;
            let l = positive("L", c.l()?)?;
            let delta = positive("f(x1) - f*", delta()?)?;
            formula = epsilon.map(|e| {
                delta
                    * [
                        140f64.powi(3) * d * d * l * l * s0 * s0 / e.powi(6),
                        40.0 * l * d * d / (e * e),
                        512.0 * d.sqrt() * s1.powi(3) / (l * s0 * e.powi(3)),
                        96f64.powf(1.5) * d * d * s0 * s0 * l.sqrt()
                            / (e.powi(3) * delta.powf(1.5)),
                    ]
                    .into_iter()
                    .fold(0.0, f64::max)
            });
            horizon = resolve(formula)?;
            let t = horizon as f64;
            let floor = delta * l0 * l0 / (d * s0 * s0);
            if t < floor {
                warnings.push(format!(
                    "T = {horizon} is below the validity floor {floor:.3e}"
                ));
            }
            alpha =
                delta.powf(1.0 / 6.0) * (d * s0).cbrt() / (l.powf(2.0 / 3.0) * t.powf(1.0 / 6.0));
            let raw = alpha * delta.sqrt() / (4.0 * t.sqrt() * d * s0);
            eta = raw.min(alpha / (8.0 * d * l0)).min(1.0 / (32.0 * d * l));
            rho = None;
        }
    }

    if let (Some(f), Some(t)) = (formula, given_t) {
        if (t as f64) < f && !setting.takes_horizon() {
            warnings.push(format!("horizon {t} overrides the formula value {f:.3e}"));
        }
    }

    let s = Schedule {
        setting,
        eta,
        alpha,
        horizon,
        averaging: setting.averaging(),
        metric: setting.metric(),
        rho,
        epsilon,
        formula_horizon: formula,
        c0,
        warnings,
    };
    s.validate()?;
    Ok(s)
}

/// The step-size cap each setting's variance lemma requires.
pub fn eta_cap(setting: Setting, d: usize, alpha: f64, l0: f64) -> f64 {
    let d = d as f64;
    match setting {
        Setting::DetNonsmoothCvx
        | Setting::DetNonsmoothScvx
        | Setting::StoNonsmoothCvx
        | Setting::StoNonsmoothScvx => alpha / (3.0 * d * l0),
        Setting::DetSmoothCvx | Setting::DetSmoothScvx | Setting::DetSmoothNoncvx => {
            alpha / (4.0 * d * l0)
        }
        Setting::StoSmoothCvx | Setting::StoSmoothScvx | Setting::StoSmoothNoncvx => {
            alpha / (8.0 * d * l0)
        }
    }
}
