//! Tabulated results and their CSV form.
//!
//! Numbers are written in scientific notation with nine significant digits
//! (`1.23456789e-5`). Integers and labels are written verbatim. Every file has
//! a header row and ends with a newline.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// One observable tabulated against one abscissa.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumRecord {
    pub x_label: String,
    pub x: Vec<f64>,
    pub y_label: String,
    pub y: Vec<f64>,
}

impl SpectrumRecord {
    pub fn new(x_label: impl Into<String>, x: Vec<f64>, y_label: impl Into<String>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(Self {
            x_label: x_label.into(),
            x,
            y_label: y_label.into(),
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Ordinate at the grid point nearest `x0`.
    pub fn nearest(&self, x0: f64) -> Option<(f64, f64)> {
        self.x
            .iter()
            .zip(&self.y)
            .min_by(|a, b| (a.0 - x0).abs().total_cmp(&(b.0 - x0).abs()))
            .map(|(&x, &y)| (x, y))
    }

    /// Restriction to `lo ≤ x ≤ hi`.
    pub fn window(&self, lo: f64, hi: f64) -> SpectrumRecord {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .x
            .iter()
            .zip(&self.y)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(a, b)| (*a, *b))
            .unzip();
        SpectrumRecord {
            x_label: self.x_label.clone(),
            x,
            y_label: self.y_label.clone(),
            y,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
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

pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.8e}")
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| escape(c)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_number(*v),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(s) => escape(s),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}
