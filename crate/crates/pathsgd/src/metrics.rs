//! The metrics CSV and the optional curvature export.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use pathsgd_core::train::MetricRow;
use pathsgd_core::KappaVector;

use crate::error::CliError;

pub const METRICS_HEADER: [&str; 6] = ["step", "train_loss", "train_metric", "test_metric", "kappa_ratio", "wall_ms"];
pub const KAPPA_HEADER: [&str; 5] = ["step", "gamma2", "param", "kappa1", "kappa2"];

/// Appends rows to `metrics.csv`, flushing after each one.
pub struct MetricsWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl MetricsWriter {
    /// Starts a new file with the header.
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(METRICS_HEADER)?;
        writer.flush().map_err(|e| CliError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), writer })
    }

    /// Reopens an existing file for a run resumed at `step`: rows after
    /// `step`, and rows off the `eval_interval` grid (written when an earlier
    /// run stopped between evaluations), are dropped so the finished file
    /// matches an uninterrupted run.
    pub fn resume(path: &Path, step: u64, eval_interval: u64) -> Result<Self, CliError> {
        if !path.exists() {
            return Self::create(path);
        }
        let mut reader = csv::Reader::from_path(path)?;
        if reader.headers()?.iter().ne(METRICS_HEADER) {
            return Err(CliError::format(path, 1, "not a metrics file"));
        }
        let mut keep = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let s: u64 = rec
                .get(0)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::format(path, i + 2, "bad step"))?;
            if s <= step && s % eval_interval.max(1) == 0 {
                keep.push(rec);
            }
        }
        let mut out = Self::create(path)?;
        for rec in &keep {
            out.writer.write_record(rec)?;
        }
        out.writer.flush().map_err(|e| CliError::io(path, e))?;
        Ok(out)
    }

    pub fn write(&mut self, row: &MetricRow, wall_ms: u128) -> Result<(), CliError> {
        let ratio = row.kappa_ratio.map(|r| r.to_string()).unwrap_or_default();
        self.writer.write_record([
            row.step.to_string(),
            row.train_loss.to_string(),
            row.train_metric.to_string(),
            row.test_metric.to_string(),
            ratio,
            wall_ms.to_string(),
        ])?;
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Appends `gamma2` and both curvature terms of every parameter at `step`.
pub fn append_kappa(path: &Path, step: u64, gamma2: f64, kappa: &KappaVector) -> Result<(), CliError> {
    let fresh = !path.exists() || fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(KAPPA_HEADER)?;
    }
    for (i, (a, b)) in kappa.k1.iter().zip(&kappa.k2).enumerate() {
        w.write_record([step.to_string(), gamma2.to_string(), i.to_string(), a.to_string(), b.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
