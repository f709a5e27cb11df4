//! Column-checked CSV tables.

use std::io::Write;

use crate::error::{Error, Result};

/// Leading columns of every simulation sweep.
pub const SWEEP_COLUMNS: [&str; 15] = [
    "mode", "d", "n", "S", "sigma", "gamma", "k", "T", "c", "theta", "delta", "stderr", "n_outer",
    "n_inner", "seed",
];

pub const JUDGE_COLUMNS: [&str; 7] = [
    "k",
    "T",
    "delta",
    "stderr",
    "n_questions_used",
    "n_resample",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// Written in shortest round-trip form; NaN is written as an empty cell.
    Float(f64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_nan() => String::new(),
            Cell::Float(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) if !v.is_nan() => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    required: Vec<String>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
            required: Vec::new(),
        }
    }

    /// A table whose header must start with `prefix`, followed by `extra`.
    pub fn with_prefix(prefix: &[&str], extra: &[&str]) -> Self {
        let mut t = Table::new(&[prefix, extra].concat());
        t.required = prefix.iter().map(|s| s.to_string()).collect();
        t
    }

    pub fn sweep(extra: &[&str]) -> Self {
        Table::with_prefix(&SWEEP_COLUMNS, extra)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Schema(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; empty and text cells become NaN.
    pub fn floats(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[i].as_f64().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn texts(&self, name: &str) -> Option<Vec<String>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| r[i].render()).collect())
    }

    pub fn append(&mut self, other: Table) -> Result<()> {
        if other.columns != self.columns {
            return Err(Error::Schema(
                "cannot append tables with different headers".into(),
            ));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.check(&bytes)?;
        Ok(bytes)
    }

    /// Re-reads the serialized bytes and checks them against the header.
    fn check(&self, bytes: &[u8]) -> Result<()> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != self.columns {
            return Err(Error::Schema(format!("header mismatch: {header:?}")));
        }
        if header.len() < self.required.len() || header[..self.required.len()] != self.required[..]
        {
            return Err(Error::Schema(format!(
                "header must start with {:?}",
                self.required
            )));
        }
        let mut n = 0;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Schema(format!(
                    "record {} has {} fields",
                    n + 1,
                    rec.len()
                )));
            }
            n += 1;
        }
        if n != self.rows.len() {
            return Err(Error::Schema(format!(
                "wrote {} rows, read back {n}",
                self.rows.len()
            )));
        }
        Ok(())
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        out.write_all(&self.to_csv_bytes()?)?;
        Ok(())
    }
}
