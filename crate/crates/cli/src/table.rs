//! Tabular output and the measurement-file reader.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use attackkf_core::Vector;

use crate::config::OutputFormat;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(&'static str),
}

impl Cell {
    /// Locale-independent rendering with 17 significant digits for reals.
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_real(*v),
            Cell::Text(s) => (*s).to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Real(v) => serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, Into::into),
            Cell::Text(s) => (*s).into(),
        }
    }
}

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()
    }

    /// An array of objects keyed by the header, in header order.
    pub fn to_json(&self) -> serde_json::Value {
        self.rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<_, _> = self
                    .header
                    .iter()
                    .cloned()
                    .zip(row.iter().map(Cell::json))
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect()
    }

    /// Write to `dir/stem.{csv,json}` and return the path written.
    pub fn save(&self, dir: &Path, stem: &str, format: OutputFormat) -> io::Result<std::path::PathBuf> {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        let mut buf = Vec::new();
        match format {
            OutputFormat::Csv => self.write_csv(&mut buf)?,
            OutputFormat::Json => write_json(&mut buf, &self.to_json())?,
        }
        fs::write(&path, buf)?;
        Ok(path)
    }
}

pub fn write_json<W: Write>(mut out: W, value: &impl serde::Serialize) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line in the file, when the problem is tied to one.
    pub line: Option<u64>,
    pub message: String,
}

/// Read a measurement file: a header row followed by rows of
/// `step, y₁, …, y_{n_z}` with steps `1, 2, 3, …`.
pub fn read_measurements<R: io::Read>(input: R, nz: usize) -> Result<Vec<Vector>, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.len() != nz + 1 {
        return Err(ParseError {
            line: Some(1),
            message: format!(
                "header has {} columns, expected step plus {nz} measurement columns",
                header.len()
            ),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line());
        let fail = |message: String| ParseError { line, message };
        if record.len() != nz + 1 {
            return Err(fail(format!(
                "expected {} columns, found {}",
                nz + 1,
                record.len()
            )));
        }
        let step: u64 = record[0].parse().map_err(|_| {
            fail(format!(
                "step index {:?} is not a nonnegative integer",
                &record[0]
            ))
        })?;
        let expected = out.len() as u64 + 1;
        if step != expected {
            return Err(fail(format!(
                "step index {step} out of sequence, expected {expected}"
            )));
        }
        let mut y = Vector::zeros(nz);
        for (i, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| fail(format!("column {:?}: {cell:?} is not a number", &header[i + 1])))?;
            if !v.is_finite() {
                return Err(fail(format!("column {:?}: value is not finite", &header[i + 1])));
            }
            y[i] = v;
        }
        out.push(y);
    }
    if out.is_empty() {
        return Err(ParseError {
            line: None,
            message: "no measurement rows".into(),
        });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> ParseError {
    ParseError {
        line: e.position().map(|p| p.line()),
        message: e.to_string(),
    }
}
