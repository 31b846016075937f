//! Table rows and trajectory files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const REPORT_HEADER: [&str; 8] = [
    "No.",
    "w1",
    "p1",
    "num_params",
    "mse_root",
    "max_err_inf",
    "lip_inf",
    "status",
];

/// One network of a results table. Failed measurements are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "No.")]
    pub no: usize,
    pub w1: usize,
    pub p1: usize,
    pub num_params: usize,
    pub mse_root: Option<f64>,
    pub max_err_inf: Option<f64>,
    pub lip_inf: Option<f64>,
    pub status: String,
}

impl ReportRow {
    pub fn succeeded(&self) -> bool {
        self.status == "ok"
    }
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

pub fn read_report(path: &Path) -> CliResult<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// One closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub stage_cost: f64,
}

pub fn write_trajectory(path: &Path, steps: &[TrajectoryStep]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let (n, m) = steps.first().map_or((0, 0), |s| (s.state.len(), s.input.len()));
    let mut header = vec!["step".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.push("stage_cost".into());
    w.write_record(&header)?;
    for (k, s) in steps.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(s.state.iter().chain(&s.input).map(f64::to_string));
        rec.push(s.stage_cost.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

/// Training losses; epoch 0 is the initialization.
pub fn write_trace(path: &Path, initial: f64, trace: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "mse"])?;
    for (k, v) in std::iter::once(&initial).chain(trace).enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}
