//! Measurement CSV: header `q_g,q_c,D,R` with optional `R_g,R_c` columns.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::rdmodel::{Measurement, MeasurementError};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("line {line}: {source}")]
    Range {
        line: u64,
        #[source]
        source: MeasurementError,
    },
}

impl CsvError {
    /// 1-based line of the offending row, header included.
    pub fn line(&self) -> Option<u64> {
        match self {
            CsvError::Io { .. } => None,
            CsvError::Schema { line, .. } | CsvError::Range { line, .. } => Some(*line),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    q_g: i64,
    q_c: i64,
    #[serde(rename = "D")]
    distortion: f64,
    #[serde(rename = "R")]
    rate: f64,
    #[serde(rename = "R_g", default)]
    rate_geometry: Option<f64>,
    #[serde(rename = "R_c", default)]
    rate_color: Option<f64>,
}

fn qp(field: &'static str, value: i64, line: u64) -> Result<u32, CsvError> {
    u32::try_from(value)
        .ok()
        .filter(|q| (crate::rdmodel::QP_MIN..=crate::rdmodel::QP_MAX).contains(q))
        .ok_or(CsvError::Range {
            line,
            source: MeasurementError::QpOutOfRange { field, value },
        })
}

/// Parses and validates measurements from any reader.
pub fn read_csv(input: impl Read) -> Result<Vec<Measurement>, CsvError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let schema = |e: csv::Error| CsvError::Schema {
        line: e.position().map_or(1, |p| p.line()),
        message: match e.kind() {
            csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
            _ => e.to_string(),
        },
    };
    let headers = reader.headers().map_err(schema)?.clone();
    for required in ["q_g", "q_c", "D", "R"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CsvError::Schema {
                line: 1,
                message: format!("missing column {required}"),
            });
        }
    }
    if headers.iter().any(|h| h == "R_g") != headers.iter().any(|h| h == "R_c") {
        return Err(CsvError::Schema {
            line: 1,
            message: "R_g and R_c must appear together".into(),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(schema)?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| CsvError::Schema {
            line,
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        let mut m = Measurement::new(qp("q_g", row.q_g, line)?, qp("q_c", row.q_c, line)?, row.distortion, row.rate);
        match (row.rate_geometry, row.rate_color) {
            (Some(g), Some(c)) => m = m.with_split(g, c),
            (None, None) => {}
            _ => {
                return Err(CsvError::Schema {
                    line,
                    message: "R_g and R_c must both be present or both empty".into(),
                })
            }
        }
        m.validate().map_err(|source| CsvError::Range { line, source })?;
        out.push(m);
    }
    Ok(out)
}

/// Reads a measurement file.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<Measurement>, CsvError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Writes measurements; the split columns are emitted only when every row
/// carries them.
pub fn write_csv(measurements: &[Measurement], mut out: impl Write) -> std::io::Result<()> {
    let split = !measurements.is_empty()
        && measurements
            .iter()
            .all(|m| m.rate_geometry.is_some() && m.rate_color.is_some());
    if split {
        writeln!(out, "q_g,q_c,D,R,R_g,R_c")?;
    } else {
        writeln!(out, "q_g,q_c,D,R")?;
    }
    for m in measurements {
        write!(out, "{},{},{},{}", m.q_g, m.q_c, format_real(m.distortion), format_real(m.rate))?;
        if let (true, Some(g), Some(c)) = (split, m.rate_geometry, m.rate_color) {
            write!(out, ",{},{}", format_real(g), format_real(c))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
