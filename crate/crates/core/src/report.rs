//! Pass/fail reports for empirical inequality checks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// How much a Monte Carlo left-hand side may exceed its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlackPolicy {
    /// `lhs <= rhs + tol`, for quantities computed without sampling.
    Exact { tol: f64 },
    /// `lhs <= rhs + k * se`, where the slack actually used may not exceed
    /// `max_fraction * rhs` when a fraction is given.
    StdErr { k: f64, max_fraction: Option<f64> },
}

impl SlackPolicy {
    pub const fn exact() -> Self {
        SlackPolicy::Exact { tol: 1e-12 }
    }

    /// `k` standard errors, capped at a quarter of the bound.
    pub const fn std_err(k: f64) -> Self {
        SlackPolicy::StdErr {
            k,
            max_fraction: Some(0.25),
        }
    }

    /// `k` standard errors with no cap; for bounds that are zero.
    pub const fn std_err_uncapped(k: f64) -> Self {
        SlackPolicy::StdErr {
            k,
            max_fraction: None,
        }
    }

    pub fn slack(&self, rhs: f64, se: f64) -> f64 {
        match *self {
            SlackPolicy::Exact { tol } => tol * rhs.abs().max(1.0),
            SlackPolicy::StdErr { k, max_fraction } => {
                let s = k * se;
                match max_fraction {
                    Some(frac) => s.min(frac * rhs.abs()),
                    None => s,
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            SlackPolicy::Exact { tol } => format!("exact (relative tol {tol:e})"),
            SlackPolicy::StdErr {
                k,
                max_fraction: Some(f),
            } => format!("{k} SE, at most {:.0}% of rhs", 100.0 * f),
            SlackPolicy::StdErr {
                k,
                max_fraction: None,
            } => format!("{k} SE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub name: String,
    #[serde(rename = "pass")]
    pub passed: bool,
    pub worst_ratio: f64,
    /// Monte Carlo draws per point (0 for exact checks).
    pub n: u64,
    pub seed: u64,
    pub slack_policy: SlackPolicy,
    pub per_point_lhs: Vec<f64>,
    pub per_point_rhs: Vec<f64>,
    pub per_point_se: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BoundCheckReport {
    pub fn evaluate(
        name: impl Into<String>,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        se: Vec<f64>,
        policy: SlackPolicy,
        n: u64,
        seed: u64,
    ) -> Self {
        assert_eq!(lhs.len(), rhs.len(), "lhs/rhs length mismatch");
        assert_eq!(lhs.len(), se.len(), "lhs/se length mismatch");
        let passed = lhs
            .iter()
            .zip(&rhs)
            .zip(&se)
            .all(|((l, r), s)| l.is_finite() && *l <= r + policy.slack(*r, *s));
        let worst_ratio = lhs
            .iter()
            .zip(&rhs)
            .map(|(l, r)| ratio(*l, *r))
            .fold(0.0, f64::max);
        Self {
            name: name.into(),
            passed,
            worst_ratio,
            n,
            seed,
            slack_policy: policy,
            per_point_lhs: lhs,
            per_point_rhs: rhs,
            per_point_se: se,
            warnings: Vec::new(),
        }
    }

    /// Exact comparison at every point.
    pub fn exact(name: impl Into<String>, lhs: Vec<f64>, rhs: Vec<f64>) -> Self {
        let se = vec![0.0; lhs.len()];
        Self::evaluate(name, lhs, rhs, se, SlackPolicy::exact(), 0, 0)
    }

    pub fn with_warning(mut self, w: impl Into<String>) -> Self {
        self.warnings.push(w.into());
        self
    }

    pub fn len(&self) -> usize {
        self.per_point_lhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_point_lhs.is_empty()
    }

    /// Indices of points that violate the bound.
    pub fn failures(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let (l, r, s) = (
                    self.per_point_lhs[i],
                    self.per_point_rhs[i],
                    self.per_point_se[i],
                );
                !(l.is_finite() && l <= r + self.slack_policy.slack(r, s))
            })
            .collect()
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{:<48} {}  worst lhs/rhs = {:.4}  ({} points)",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.worst_ratio,
            self.len()
        )
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.summary_line());
        let _ = writeln!(out, "  slack: {}", self.slack_policy.describe());
        for w in &self.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
        let _ = writeln!(
            out,
            "  {:>5} {:>14} {:>14} {:>12} {:>8}",
            "i", "lhs", "rhs", "se", "ratio"
        );
        for i in 0..self.len() {
            let (l, r, s) = (
                self.per_point_lhs[i],
                self.per_point_rhs[i],
                self.per_point_se[i],
            );
            let _ = writeln!(
                out,
                "  {:>5} {:>14.6e} {:>14.6e} {:>12.4e} {:>8.4}",
                i,
                l,
                r,
                s,
                ratio(l, r)
            );
        }
        out
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// True when every report passed.
pub fn all_passed(reports: &[BoundCheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}
