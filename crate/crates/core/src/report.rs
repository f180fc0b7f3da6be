//! CSV and JSON emission.
//!
//! Per-trial statistics use one long format,
//! `trial_id,n,k,d,T,delta,statistic_name,value`; summaries are one row per
//! level with the field names of the summary structs. Missing values are
//! written as empty cells.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classification::ClassificationReport;
use crate::concentration::{ComplexityEstimate, RademacherEstimate, RectClassSpec};
use crate::deviation::DeviationReport;
use crate::error::{Error, Result};

/// One row of the long per-trial format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub trial_id: usize,
    pub n: usize,
    pub k: Option<usize>,
    pub d: usize,
    #[serde(rename = "T")]
    pub t_region: Option<f64>,
    pub delta: Option<f64>,
    pub statistic_name: String,
    pub value: f64,
}

/// Writes serializable rows with a header line.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_rows_file<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(rows, BufWriter::new(file))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn deviation_long_rows(report: &DeviationReport) -> Vec<LongRow> {
    let cfg = &report.config;
    report
        .trials
        .iter()
        .map(|r| LongRow {
            trial_id: r.trial,
            n: cfg.n,
            k: Some(r.k),
            d: cfg.d,
            t_region: Some(cfg.t_region),
            delta: Some(cfg.delta),
            statistic_name: "sup_deviation".into(),
            value: r.deviation,
        })
        .collect()
}

pub fn rademacher_long_rows(class: &RectClassSpec, est: &RademacherEstimate) -> Vec<LongRow> {
    est.values
        .iter()
        .enumerate()
        .map(|(trial, v)| LongRow {
            trial_id: trial,
            n: class.n,
            k: Some(class.k),
            d: class.d,
            t_region: Some(class.t_region),
            delta: None,
            statistic_name: "relative_rademacher".into(),
            value: *v,
        })
        .collect()
}

/// Summary rows of a Rademacher run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherSummary {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub t_region: f64,
    pub p: f64,
    pub trials: usize,
    pub mean: f64,
    pub std_error: f64,
    pub normalized: f64,
    pub q: Option<f64>,
    pub q_std_error: Option<f64>,
}

impl RademacherSummary {
    pub fn new(class: &RectClassSpec, est: &RademacherEstimate, q: Option<&ComplexityEstimate>) -> Self {
        RademacherSummary {
            n: class.n,
            k: class.k,
            d: class.d,
            t_region: class.t_region,
            p: est.p,
            trials: est.trials,
            mean: est.mean,
            std_error: est.std_error,
            normalized: est.normalized(),
            q: q.map(|c| c.mean),
            q_std_error: q.map(|c| c.std_error),
        }
    }
}

/// Long rows of a classification run: `k` carries `[n alpha]`, `T` is empty.
pub fn classification_long_rows(report: &ClassificationReport) -> Vec<LongRow> {
    let d = report.config.generator.d;
    report
        .trials
        .iter()
        .map(|r| LongRow {
            trial_id: r.trial,
            n: r.n,
            k: Some(crate::empirical::lattice_index(r.n, r.alpha)),
            d,
            t_region: None,
            delta: Some(report.config.delta),
            statistic_name: "sup_risk_deviation".into(),
            value: r.sup_deviation,
        })
        .collect()
}
