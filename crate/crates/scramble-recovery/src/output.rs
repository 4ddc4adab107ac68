//! Tabular artifacts: the sweep CSV schema, generic tables, JSON envelopes and atomic writes.
//!
//! CSV floats are written as `{:.16e}` (17 significant digits), missing values as empty
//! fields, lines end in `\n`. JSON files hold one object `{metadata, columns, rows}` where
//! each row is an array aligned with `columns`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Column order of a sweep CSV.
pub const SWEEP_COLUMNS: [&str; 14] = [
    "scheme",
    "backend",
    "theta_rad",
    "rx2",
    "p_est",
    "sigma_c_x",
    "sigma_a_x",
    "p_succ",
    "fidelity",
    "fidelity_analytic",
    "ci_low",
    "ci_high",
    "shots",
    "seed",
];

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// One cell of a table.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Float(Option<f64>),
    Int(Option<u64>),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Float(Some(v)) => format_float(*v),
            Cell::Int(Some(v)) => v.to_string(),
            Cell::Float(None) | Cell::Int(None) => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Float(Some(v)) if v.is_finite() => json!(v),
            Cell::Float(Some(v)) => Value::String(format_float(*v)),
            Cell::Int(Some(v)) => json!(v),
            Cell::Float(None) | Cell::Int(None) => Value::Null,
        }
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self, metadata: &Metadata) -> Result<String> {
        let rows: Vec<Value> =
            self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let doc = json!({ "metadata": metadata, "columns": self.columns, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: Format, metadata: &Metadata) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(metadata),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Run description stored in JSON output; deliberately free of timestamps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub version: String,
    pub command: String,
    pub config: Value,
}

impl Metadata {
    pub fn new(command: &str, config: Value) -> Self {
        Self { version: env!("CARGO_PKG_VERSION").into(), command: command.into(), config }
    }
}

/// Raw CSV text as (header, records); all fields as strings.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(csv_err))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// One θ point of a scheme sweep or emulation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: String,
    pub backend: String,
    pub theta_rad: f64,
    pub rx2: f64,
    /// Rate (D_t F − 1)/(D_t − 1) implied by the fidelity.
    pub p_est: f64,
    pub sigma_c_x: Option<f64>,
    pub sigma_a_x: Option<f64>,
    pub p_succ: f64,
    pub fidelity: f64,
    pub fidelity_analytic: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
}

/// (D_t F − 1)/(D_t − 1).
pub fn rate_from_fidelity(fidelity: f64, d_t: usize) -> f64 {
    let d = d_t as f64;
    (d * fidelity - 1.0) / (d - 1.0)
}

impl SweepRow {
    pub fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Text(self.scheme.clone()),
            Cell::Text(self.backend.clone()),
            Cell::Float(Some(self.theta_rad)),
            Cell::Float(Some(self.rx2)),
            Cell::Float(Some(self.p_est)),
            Cell::Float(self.sigma_c_x),
            Cell::Float(self.sigma_a_x),
            Cell::Float(Some(self.p_succ)),
            Cell::Float(Some(self.fidelity)),
            Cell::Float(Some(self.fidelity_analytic)),
            Cell::Float(self.ci_low),
            Cell::Float(self.ci_high),
            Cell::Int(self.shots),
            Cell::Int(self.seed),
        ]
    }

    pub fn table(rows: &[SweepRow]) -> Table {
        let mut t = Table::new(&SWEEP_COLUMNS);
        for r in rows {
            t.push(r.cells());
        }
        t
    }

    /// Parses one CSV record in [`SWEEP_COLUMNS`] order.
    pub fn from_record(fields: &[String]) -> Result<Self> {
        if fields.len() != SWEEP_COLUMNS.len() {
            return Err(Error::Parse(format!(
                "sweep row has {} fields, expected {}",
                fields.len(),
                SWEEP_COLUMNS.len()
            )));
        }
        let opt_f = |i: usize| -> Result<Option<f64>> {
            let s = fields[i].trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("{}: '{s}' is not a number", SWEEP_COLUMNS[i])))
        };
        let req_f = |i: usize| -> Result<f64> {
            opt_f(i)?.ok_or_else(|| Error::Parse(format!("{} is empty", SWEEP_COLUMNS[i])))
        };
        let opt_u = |i: usize| -> Result<Option<u64>> {
            let s = fields[i].trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("{}: '{s}' is not an integer", SWEEP_COLUMNS[i])))
        };
        Ok(Self {
            scheme: fields[0].clone(),
            backend: fields[1].clone(),
            theta_rad: req_f(2)?,
            rx2: req_f(3)?,
            p_est: req_f(4)?,
            sigma_c_x: opt_f(5)?,
            sigma_a_x: opt_f(6)?,
            p_succ: req_f(7)?,
            fidelity: req_f(8)?,
            fidelity_analytic: req_f(9)?,
            ci_low: opt_f(10)?,
            ci_high: opt_f(11)?,
            shots: opt_u(12)?,
            seed: opt_u(13)?,
        })
    }

    /// Parses a full sweep CSV, checking the header.
    pub fn parse_csv(text: &str) -> Result<Vec<Self>> {
        let (header, rows) = read_csv(text)?;
        if header != SWEEP_COLUMNS {
            return Err(Error::Parse(format!("unexpected sweep header {header:?}")));
        }
        rows.iter().map(|r| Self::from_record(r)).collect()
    }
}
