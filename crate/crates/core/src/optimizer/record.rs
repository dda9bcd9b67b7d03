use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::{Metric, Setting};
use crate::error::Result;

/// One recorded iteration. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    pub f_value: f64,
    pub f_gap: f64,
    pub grad_norm_sq: f64,
    pub est_norm_sq: f64,
    pub eta: f64,
    pub alpha: f64,
}

pub const CSV_HEADER: &str = "t,f_value,f_gap,grad_norm_sq,est_norm_sq,eta,alpha";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub setting: Setting,
    pub estimator: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Iterations actually completed (less than T after divergence).
    pub steps: usize,
    pub queries: u64,
    pub metric: Metric,
    pub final_metric: f64,
    pub diverged: bool,
    pub exited_box: bool,
    /// (1/T) sum_t f(x_t) - f*
    pub mean_gap: f64,
    /// f at the uniform average of x_1..x_T, minus f*
    pub averaged_point_gap: f64,
    /// f at the rho-weighted average, minus f* (rho-weighted schedules only)
    pub weighted_point_gap: Option<f64>,
    /// f(x_{T+1}) - f*
    pub last_gap: f64,
    /// (1/T) sum_t ||grad f(x_t)||^2
    pub mean_grad_norm_sq: f64,
}

/// Per-step state kept for variance diagnostics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    /// x_1, ..., x_{T+1}
    pub points: Vec<Vec<f64>>,
    /// Stored residual value entering step t (before the new query).
    pub prev_values: Vec<f64>,
    /// ||g_t||^2 for t = 1..=T.
    pub est_norm_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub summary: RunSummary,
    /// The point the setting outputs (average, weighted average or last).
    pub averaged_point: Vec<f64>,
    pub final_point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

impl RunRecord {
    pub fn rows_recorded(&self) -> usize {
        self.rows.len()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wr.serialize(row)?;
        }
        if self.rows.is_empty() {
            wr.write_record(CSV_HEADER.split(','))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}
