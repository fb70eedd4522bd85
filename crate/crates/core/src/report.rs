//! Plain-text artifacts: `metrics.txt`, `predictions.csv`, `attention.csv`
//! and `attention_study.csv`.
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a file
//! back yields the same `f64` bit patterns.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::model::AttentionTrace;
use crate::study::AttentionStudy;
use crate::trainer::PredictionRow;

pub const METRICS_FILE: &str = "metrics.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const ATTENTION_FILE: &str = "attention.csv";
pub const STUDY_FILE: &str = "attention_study.csv";

pub const PREDICTIONS_HEADER: [&str; 4] = ["battery_id", "cycle", "actual_ah", "predicted_ah"];
pub const ATTENTION_HEADER: [&str; 4] = ["battery_id", "frame_t", "slot", "alpha"];
pub const STUDY_HEADER: [&str; 4] = ["battery_id", "frame_t", "target_cycle", "capacity_diff"];

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    pub battery_id: String,
    pub frame_t: usize,
    pub slot: usize,
    pub alpha: f64,
}

/// Everything a run may emit. Empty parts produce no file.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub metrics: Option<Metrics>,
    pub predictions: Vec<PredictionRow>,
    pub traces: Vec<(String, AttentionTrace)>,
    pub studies: Vec<(String, AttentionStudy)>,
}

impl Report {
    /// `key=value` lines: metrics first, then per-battery, per-slot correlations.
    pub fn metrics_text(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.metrics {
            out.push_str(&format!("rmse={}\nmape={}\nr2={}\nn={}\n", m.rmse, m.mape, m.r2, m.n));
        }
        let fmt = |c: &Option<f64>| c.map_or_else(|| "none".to_string(), |v| v.to_string());
        for (id, s) in &self.studies {
            for slot in 0..s.slots() {
                out.push_str(&format!("corr_abs.{id}.slot{slot}={}\n", fmt(&s.abs_correlation[slot])));
                out.push_str(&format!("corr_raw.{id}.slot{slot}={}\n", fmt(&s.raw_correlation[slot])));
            }
        }
        out
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes the non-empty parts of `report` into `dir`; returns the paths written.
pub fn emit_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let text = report.metrics_text();
    if !text.is_empty() {
        let path = dir.join(METRICS_FILE);
        let mut f = create(&path)?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    if !report.predictions.is_empty() {
        let path = dir.join(PREDICTIONS_FILE);
        write_predictions(&path, &report.predictions)?;
        written.push(path);
    }

    if !report.traces.is_empty() {
        let path = dir.join(ATTENTION_FILE);
        write_attention(&path, &report.traces)?;
        written.push(path);
    }

    if !report.studies.is_empty() {
        let path = dir.join(STUDY_FILE);
        let mut w = csv_writer(&path)?;
        let rows = std::iter::once(STUDY_HEADER.map(String::from)).chain(report.studies.iter().flat_map(|(id, s)| {
            s.frame_starts.iter().zip(&s.capacity_diffs).map(move |(&t, d)| {
                let n = s.slots();
                [id.clone(), t.to_string(), (t + n).to_string(), d.to_string()]
            })
        }));
        write_rows(&mut w, &path, rows)?;
        written.push(path);
    }
    Ok(written)
}

/// `predictions.csv` layout at an arbitrary path.
pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let lines = std::iter::once(PREDICTIONS_HEADER.map(String::from)).chain(rows.iter().map(|r| {
        [
            r.battery_id.clone(),
            r.cycle.to_string(),
            r.actual.to_string(),
            r.predicted.to_string(),
        ]
    }));
    write_rows(&mut w, path, lines)
}

/// `attention.csv` layout at an arbitrary path; one row per (frame, slot).
pub fn write_attention(path: &Path, traces: &[(String, AttentionTrace)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let lines = std::iter::once(ATTENTION_HEADER.map(String::from)).chain(traces.iter().flat_map(|(id, t)| {
        t.weights
            .iter()
            .enumerate()
            .map(move |(s, a)| [id.clone(), t.start.to_string(), s.to_string(), a.to_string()])
    }));
    write_rows(&mut w, path, lines)
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, path: &Path, rows: impl Iterator<Item = [String; 4]>) -> Result<()> {
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let got = r.headers().map_err(|e| csv_err(path, e))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected header {}, found {}",
                header.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| rec.map(|rec| (i as u64 + 2, rec)).map_err(|e| csv_err(path, e)))
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, row: u64, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Row {
        path: path.display().to_string(),
        row,
        message: format!("cannot parse column {i}"),
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    read_csv(path, &PREDICTIONS_HEADER)?
        .into_iter()
        .map(|(row, rec)| {
            Ok(PredictionRow {
                battery_id: field(path, row, &rec, 0)?,
                cycle: field(path, row, &rec, 1)?,
                actual: field(path, row, &rec, 2)?,
                predicted: field(path, row, &rec, 3)?,
            })
        })
        .collect()
}

pub fn read_attention(path: &Path) -> Result<Vec<AttentionRow>> {
    read_csv(path, &ATTENTION_HEADER)?
        .into_iter()
        .map(|(row, rec)| {
            Ok(AttentionRow {
                battery_id: field(path, row, &rec, 0)?,
                frame_t: field(path, row, &rec, 1)?,
                slot: field(path, row, &rec, 2)?,
                alpha: field(path, row, &rec, 3)?,
            })
        })
        .collect()
}

/// Parses `key=value` lines.
pub fn read_metrics(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Row {
                    path: path.display().to_string(),
                    row: i as u64 + 1,
                    message: "expected key=value".into(),
                })
        })
        .collect()
}
