//! Run artifacts: training-history CSV, validation-grid CSV, node-set
//! diagnostics, and the machine-readable run summary, plus the
//! cross-run comparison table. Every file written here can be read back
//! by this module (round-trip contract).

use crate::solver::HistoryRow;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing summary file {0}")]
    MissingSummary(PathBuf),
    #[error("no run directories given")]
    NoRuns,
}

pub const HISTORY_FILE: &str = "history.csv";
pub const VALIDATION_FILE: &str = "validation_grid.csv";
pub const NODES_FILE: &str = "nodes.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error_report.csv";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

/// Machine-readable run summary; wall-clock fields are excluded from
/// determinism comparisons.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub mode: String,
    pub problem: String,
    pub n_points: usize,
    pub repeats: usize,
    pub seed: u64,
    pub iterations: usize,
    pub l2_relative_error: f64,
    pub median_wall_ms_per_10_iter: Option<f64>,
    pub unique_evals: usize,
    pub raw_draws: u64,
}

impl RunSummary {
    /// The summary with timing fields cleared, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self {
            median_wall_ms_per_10_iter: None,
            ..self.clone()
        }
    }
}

pub fn write_history(dir: &Path, rows: &[HistoryRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(dir.join(HISTORY_FILE))?;
    w.write_record([
        "iteration",
        "mse_E",
        "mse_I",
        "mse_B",
        "total",
        "wall_ms_per_10_iter",
        "validation_L2",
    ])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.mse_e.to_string(),
            r.mse_i.to_string(),
            r.mse_b.to_string(),
            r.total.to_string(),
            r.wall_ms_per_10_iter.to_string(),
            r.validation_l2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(dir: &Path) -> Result<Vec<HistoryRow>, ReportError> {
    let mut r = csv::Reader::from_path(dir.join(HISTORY_FILE))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").parse::<f64>().unwrap_or(f64::NAN);
        rows.push(HistoryRow {
            iteration: rec.get(0).unwrap_or("0").parse().unwrap_or(0),
            mse_e: field(1),
            mse_i: field(2),
            mse_b: field(3),
            total: field(4),
            wall_ms_per_10_iter: field(5),
            validation_l2: field(6),
        });
    }
    Ok(rows)
}

/// One validation-grid sample: coordinates (space, then time if any),
/// exact and predicted values, absolute pointwise error.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub coords: Vec<f64>,
    pub exact: f64,
    pub predicted: f64,
}

pub fn write_validation_grid(dir: &Path, rows: &[ValidationRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(dir.join(VALIDATION_FILE))?;
    let dim = rows.first().map(|r| r.coords.len()).unwrap_or(0);
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.extend(["exact".into(), "predicted".into(), "abs_error".into()]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.coords.iter().map(|c| c.to_string()).collect();
        rec.push(r.exact.to_string());
        rec.push(r.predicted.to_string());
        rec.push((r.exact - r.predicted).abs().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_validation_grid(dir: &Path) -> Result<Vec<ValidationRow>, ReportError> {
    let mut r = csv::Reader::from_path(dir.join(VALIDATION_FILE))?;
    let n_fields = r.headers()?.len();
    let dim = n_fields.saturating_sub(3);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("").parse::<f64>().unwrap_or(f64::NAN);
        rows.push(ValidationRow {
            coords: (0..dim).map(f).collect(),
            exact: f(dim),
            predicted: f(dim + 1),
        });
    }
    Ok(rows)
}

/// Node-set dedup diagnostics for the last assembled batch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NodeDiagnostics {
    pub n_points: usize,
    pub repeats: usize,
    pub unique_evals: usize,
    pub raw_draws: u64,
    pub unique_to_raw_ratio: f64,
}

pub fn write_nodes(dir: &Path, d: &NodeDiagnostics) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(dir.join(NODES_FILE))?;
    w.write_record(["n_points", "repeats", "unique_evals", "raw_draws", "unique_to_raw_ratio"])?;
    w.write_record([
        d.n_points.to_string(),
        d.repeats.to_string(),
        d.unique_evals.to_string(),
        d.raw_draws.to_string(),
        d.unique_to_raw_ratio.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn read_nodes(dir: &Path) -> Result<NodeDiagnostics, ReportError> {
    let mut r = csv::Reader::from_path(dir.join(NODES_FILE))?;
    let rec = r
        .records()
        .next()
        .ok_or_else(|| ReportError::MissingSummary(dir.join(NODES_FILE)))??;
    Ok(NodeDiagnostics {
        n_points: rec.get(0).unwrap_or("0").parse().unwrap_or(0),
        repeats: rec.get(1).unwrap_or("0").parse().unwrap_or(0),
        unique_evals: rec.get(2).unwrap_or("0").parse().unwrap_or(0),
        raw_draws: rec.get(3).unwrap_or("0").parse().unwrap_or(0),
        unique_to_raw_ratio: rec.get(4).unwrap_or("nan").parse().unwrap_or(f64::NAN),
    })
}

pub fn write_summary(dir: &Path, s: &RunSummary) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(s)?;
    std::fs::write(dir.join(SUMMARY_FILE), json)?;
    Ok(())
}

pub fn read_summary(dir: &Path) -> Result<RunSummary, ReportError> {
    let path = dir.join(SUMMARY_FILE);
    if !path.exists() {
        return Err(ReportError::MissingSummary(path));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Final error report CSV: a single row with the headline metric.
pub fn write_error_report(dir: &Path, l2: f64) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(dir.join(ERROR_FILE))?;
    w.write_record(["metric", "value"])?;
    w.write_record(["l2_relative_error", &l2.to_string()])?;
    w.flush()?;
    Ok(())
}

/// One row of the cross-run comparison table.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CompareRow {
    pub n_points: usize,
    pub accuracy: f64,
    pub median_wall_ms_per_10_iter: Option<f64>,
    pub run_dir: String,
}

/// Combines run summaries into the accuracy/timing table, one row per
/// run, sorted ascending by N.
pub fn compare(dirs: &[PathBuf]) -> Result<Vec<CompareRow>, ReportError> {
    if dirs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let mut rows = Vec::new();
    for d in dirs {
        let s = read_summary(d)?;
        rows.push(CompareRow {
            n_points: s.n_points,
            accuracy: s.l2_relative_error,
            median_wall_ms_per_10_iter: s.median_wall_ms_per_10_iter,
            run_dir: d.display().to_string(),
        });
    }
    rows.sort_by_key(|r| r.n_points);
    Ok(rows)
}

pub fn write_compare_csv(out: &mut impl std::io::Write, rows: &[CompareRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["n_points", "accuracy", "median_wall_ms_per_10_iter", "run_dir"])?;
    for r in rows {
        w.write_record([
            r.n_points.to_string(),
            r.accuracy.to_string(),
            r.median_wall_ms_per_10_iter
                .map(|v| v.to_string())
                .unwrap_or_default(),
            r.run_dir.clone(),
        ])?;
    }
    let data = w.into_inner().expect("in-memory writer");
    out.write_all(&data)?;
    Ok(())
}
