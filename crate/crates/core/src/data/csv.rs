use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{OccupancyLabels, PowerTrace};
use crate::error::{Error, Result};

/// A trace as read from disk, before missing readings are dropped.
///
/// `None` marks a missing reading: an empty power field, the `-1` sentinel,
/// an empty occupancy field, or a second skipped in the timestamp sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub start_time: i64,
    pub sample_period: f64,
    pub values: Vec<Option<f64>>,
    /// Occupancy aligned with `values`; 0 is a placeholder at missing rows.
    pub labels: Option<Vec<u8>>,
}

/// Indices dropped by [`clean_missing`], relative to the raw trace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub removed: Vec<usize>,
}

impl CleaningReport {
    /// Drops the same indices from labels aligned with the raw trace.
    pub fn apply_to_labels(&self, raw_labels: &[u8]) -> Result<OccupancyLabels> {
        let mut removed = self.removed.iter().peekable();
        let kept = raw_labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                if removed.peek() == Some(&&i) {
                    removed.next();
                    None
                } else {
                    Some(*l)
                }
            })
            .collect();
        OccupancyLabels::new(kept)
    }
}

fn parse_timestamp(field: &str) -> Option<i64> {
    if let Ok(secs) = field.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(field, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

fn parse_power(field: &str, row: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        row,
        message: format!("power `{field}` is not a number"),
    })?;
    if v == -1.0 {
        Ok(None)
    } else if v.is_finite() && v >= 0.0 {
        Ok(Some(v))
    } else {
        Err(Error::Parse {
            row,
            message: format!("power {v} is negative or non-finite"),
        })
    }
}

fn parse_label(field: &str, row: usize) -> Result<Option<u8>> {
    match field {
        "" => Ok(None),
        "0" => Ok(Some(0)),
        "1" => Ok(Some(1)),
        other => Err(Error::Parse {
            row,
            message: format!("occupied `{other}` is not 0 or 1"),
        }),
    }
}

/// Reads a canonical `timestamp,power_w[,occupied]` file.
///
/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn load_eco_csv(path: impl AsRef<Path>) -> Result<RawTrace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(file);

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(_) => return Err(Error::NoSamples),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::NoSamples);
    }
    let with_labels = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["timestamp", "power_w"] => false,
        ["timestamp", "power_w", "occupied"] => true,
        other => {
            return Err(Error::Parse {
                row: 1,
                message: format!("unexpected header {other:?}"),
            })
        }
    };

    let mut rows: Vec<(i64, Option<f64>, u8)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = if with_labels { 3 } else { 2 };
        if record.len() != expected {
            return Err(Error::Parse {
                row,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            row,
            message: format!("unrecognised timestamp `{}`", &record[0]),
        })?;
        if let Some(&(prev, _, _)) = rows.last() {
            if ts <= prev {
                return Err(Error::Ordering {
                    row,
                    timestamp: ts,
                    previous: prev,
                });
            }
        }
        let mut power = parse_power(&record[1], row)?;
        let mut label = 0;
        if with_labels {
            match parse_label(&record[2], row)? {
                Some(l) => label = l,
                None => power = None,
            }
        }
        rows.push((ts, power, label));
    }
    if rows.is_empty() {
        return Err(Error::NoSamples);
    }

    let period = rows
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .min()
        .unwrap_or(1);
    let mut values = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, &(ts, power, label)) in rows.iter().enumerate() {
        if i > 0 {
            let skipped = (ts - rows[i - 1].0) / period - 1;
            for _ in 0..skipped {
                values.push(None);
                labels.push(0);
            }
        }
        values.push(power);
        labels.push(label);
    }

    Ok(RawTrace {
        start_time: rows[0].0,
        sample_period: period as f64,
        values,
        labels: with_labels.then_some(labels),
    })
}

/// Removes missing readings, keeping the surviving samples in order.
pub fn clean_missing(raw: &RawTrace) -> Result<(PowerTrace, CleaningReport)> {
    let mut report = CleaningReport::default();
    let mut kept = Vec::with_capacity(raw.values.len());
    for (i, v) in raw.values.iter().enumerate() {
        match v {
            Some(v) => kept.push(*v),
            None => report.removed.push(i),
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyAfterCleaning);
    }
    let trace = PowerTrace::new(raw.start_time, raw.sample_period, kept)?;
    Ok((trace, report))
}

/// Writes the canonical CSV. Timestamps are integer epoch seconds.
pub fn write_trace_csv(
    path: impl AsRef<Path>,
    trace: &PowerTrace,
    labels: Option<&OccupancyLabels>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        if l.len() != trace.len() {
            return Err(Error::LengthMismatch {
                expected: trace.len(),
                actual: l.len(),
            });
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if labels.is_some() {
        writeln!(out, "timestamp,power_w,occupied").map_err(io)?;
    } else {
        writeln!(out, "timestamp,power_w").map_err(io)?;
    }
    for (i, v) in trace.values.iter().enumerate() {
        let ts = trace.start_time + (i as f64 * trace.sample_period).round() as i64;
        match labels {
            Some(l) => writeln!(out, "{ts},{v},{}", l.values[i]).map_err(io)?,
            None => writeln!(out, "{ts},{v}").map_err(io)?,
        }
    }
    out.flush().map_err(io)
}
