use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{BatteryHistory, CycleRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["cycle", "phase", "time_s", "voltage_v", "capacity_ah"];

/// Reads one battery in the canonical format. `source` labels errors.
///
/// Columns are located by header name, so extra columns (e.g. impedance) are
/// ignored. Cycles must appear as contiguous ascending blocks starting at 0,
/// and times must strictly increase within each (cycle, phase) curve.
pub fn parse_battery_csv<R: Read>(reader: R, id: &str, source: &str) -> Result<BatteryHistory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| format_err(source, e))?.clone();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(CSV_HEADER) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: source.into(),
            message: format!("missing column {name:?}"),
        })?;
    }
    let [c_cycle, c_phase, c_time, c_volt, c_cap] = cols;

    let mut cycles: Vec<CycleRecord> = Vec::new();
    let mut capacity_seen: Vec<bool> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| format_err(source, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Row {
            path: source.to_string(),
            row,
            message,
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        let cycle: usize = field(c_cycle)
            .parse()
            .map_err(|_| bad(format!("invalid cycle {:?}", field(c_cycle))))?;
        let time = parse_f64(field(c_time)).ok_or_else(|| bad(format!("invalid time {:?}", field(c_time))))?;
        let volt = parse_f64(field(c_volt)).ok_or_else(|| bad(format!("invalid voltage {:?}", field(c_volt))))?;

        if cycle == cycles.len() {
            cycles.push(CycleRecord {
                index: cycle,
                charge: Vec::new(),
                discharge: Vec::new(),
                capacity: 0.0,
            });
            capacity_seen.push(false);
        } else if cycle + 1 != cycles.len() {
            return Err(bad(format!(
                "cycle {cycle} out of sequence (expected {} or {})",
                cycles.len().saturating_sub(1),
                cycles.len()
            )));
        }
        let current = cycles.last_mut().expect("cycle pushed above");
        let curve = match field(c_phase) {
            "charge" => &mut current.charge,
            "discharge" => {
                let cap = parse_f64(field(c_cap)).ok_or_else(|| bad(format!("invalid capacity {:?}", field(c_cap))))?;
                if cap <= 0.0 {
                    return Err(bad(format!("capacity must be positive, got {cap}")));
                }
                let seen = &mut capacity_seen[cycle];
                if *seen && cap != current.capacity {
                    return Err(bad(format!(
                        "capacity {cap} differs from {} earlier in cycle {cycle}",
                        current.capacity
                    )));
                }
                *seen = true;
                current.capacity = cap;
                &mut current.discharge
            }
            other => return Err(bad(format!("unknown phase {other:?}"))),
        };
        if let Some(&(last, _)) = curve.last() {
            if time <= last {
                return Err(bad(format!("time {time} does not increase (previous {last})")));
            }
        }
        curve.push((time, volt));
    }

    if cycles.is_empty() {
        return Err(Error::Format {
            path: source.into(),
            message: "no cycles".into(),
        });
    }
    if let Some(i) = capacity_seen.iter().position(|s| !s) {
        return Err(Error::Format {
            path: source.into(),
            message: format!("cycle {i} has no discharge rows"),
        });
    }
    Ok(BatteryHistory {
        id: id.to_string(),
        cycles,
        metadata: BTreeMap::new(),
    })
}

pub fn read_battery_csv(path: &Path) -> Result<BatteryHistory> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_battery_csv(file, &id, &path.display().to_string())
}

/// Every `*.csv` in `dir`, sorted by file name.
pub fn read_fleet_dir(dir: &Path) -> Result<Vec<BatteryHistory>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no battery CSV files in {}", dir.display())));
    }
    paths.iter().map(|p| read_battery_csv(p)).collect()
}

/// Writes charge rows then discharge rows for each cycle. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_battery_csv<W: Write>(mut out: W, history: &BatteryHistory) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for c in &history.cycles {
        for (t, v) in &c.charge {
            writeln!(out, "{},charge,{t},{v},", c.index)?;
        }
        for (t, v) in &c.discharge {
            writeln!(out, "{},discharge,{t},{v},{}", c.index, c.capacity)?;
        }
    }
    out.flush()
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn format_err(source: &str, e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Row {
            path: source.to_string(),
            row: pos.line(),
            message: e.to_string(),
        },
        None => Error::Format {
            path: source.into(),
            message: e.to_string(),
        },
    }
}
