use std::fs;
use std::path::Path;

use crate::error::ExperimentError;
use crate::format_float;

/// One CSV field. Numbers that are not finite are written as `non_finite`,
/// so numeric columns never carry `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Flag(bool),
}

impl Cell {
    pub fn num(v: f64) -> Self {
        Self::Num(v)
    }

    /// A number, or `reason` when it is absent.
    pub fn opt(v: Option<f64>, reason: &str) -> Self {
        match v {
            Some(v) => Self::Num(v),
            None => Self::Text(reason.to_string()),
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Self::Text(s.into())
    }

    pub fn render(&self) -> String {
        match self {
            Self::Num(v) if v.is_finite() => format_float(*v),
            Self::Num(_) => "non_finite".into(),
            Self::Int(v) => v.to_string(),
            Self::Text(s) => s.clone(),
            Self::Flag(b) => b.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Num(v) => Some(*v),
            Self::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

/// Table with a fixed header; rows are kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Panics if the row width differs from the header; rows are built by
    /// the crate's own runners.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Comma-separated, LF line endings, header row first.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ExperimentError> {
        fs::write(path, self.to_csv_string()).map_err(|e| ExperimentError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_without_nan() {
        let mut r = Report::new(&["a", "b", "c"]);
        r.push(vec![Cell::num(0.1), Cell::num(f64::NAN), Cell::opt(None, "diverged")]);
        let s = r.to_csv_string();
        assert_eq!(s, "a,b,c\n1.0000000000000001e-1,non_finite,diverged\n");
    }
}
