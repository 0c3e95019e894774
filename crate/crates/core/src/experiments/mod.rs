//! The desk-scale experiments, their records, and CSV/JSON/SVG output.
//!
//! Each grid point gets its own stream, derived from a stable hash of the
//! point, so results depend only on the config and never on scheduling.
//! A failing point becomes a row with `status = failed`; it never aborts
//! the run.

mod config;
mod output;
mod plot;
mod runners;

pub use config::{ExperimentConfig, ExperimentKind};
pub use output::{csv_string, write_csv, write_json};
pub use plot::{emit_plot, render_svg};
pub use runners::{
    demo_system, run_concentration, run_experiment, run_figiel, run_james_demo, run_linf_logn, run_lp_scaling,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// `ok` or `failed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// One measured grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    /// Series name: the norm shorthand, system name, or row role.
    pub label: String,
    pub norm_json: String,
    pub n: usize,
    pub k: Option<usize>,
    pub eps: f64,
    pub seed: u64,
    pub status: RowStatus,
    /// Failure reason, empty on success.
    pub detail: String,
    pub values: BTreeMap<String, f64>,
}

impl Row {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

/// Least-squares fit `ty = slope·tx + intercept` in transformed
/// coordinates (`t = ln` on log axes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub series: String,
    pub x: String,
    pub y: String,
    pub log_x: bool,
    pub log_y: bool,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub version: String,
    pub rows: Vec<Row>,
    pub fits: Vec<Fit>,
    pub wall_clock_seconds: f64,
    /// Worker threads available to the run. Informational only: results do
    /// not depend on it.
    #[serde(default)]
    pub threads: usize,
}

impl ExperimentRecord {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn fit(&self, series: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.series == series)
    }

    /// Rows of one series, in grid order.
    pub fn series(&self, label: &str) -> Vec<&Row> {
        self.rows.iter().filter(|r| r.label == label).collect()
    }
}
