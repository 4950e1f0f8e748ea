//! CSV tables and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Column-major numeric table with a `name [unit]` header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub units: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(axis: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            names: vec![axis.into()],
            units: vec![unit.into()],
            columns: vec![values],
        }
    }

    pub fn push(&mut self, name: &str, unit: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.rows());
        self.names.push(name.into());
        self.units.push(unit.into());
        self.columns.push(values);
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    /// Keeps the leading axis and the named columns, in table order.
    pub fn select(&self, keep: &[String]) -> Result<Table, CliError> {
        if keep.is_empty() {
            return Ok(self.clone());
        }
        if let Some(missing) = keep.iter().find(|k| !self.names[1..].contains(k)) {
            return Err(CliError::Config(format!(
                "emit column '{missing}' not produced; available: {}",
                self.names[1..].join(", ")
            )));
        }
        let idx: Vec<usize> = (0..self.names.len())
            .filter(|&i| i == 0 || keep.contains(&self.names[i]))
            .collect();
        Ok(Table {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            units: idx.iter().map(|&i| self.units[i].clone()).collect(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = self
            .names
            .iter()
            .zip(&self.units)
            .map(|(n, u)| format!("{n} [{u}]"))
            .collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in 0..self.rows() {
            for (c, col) in self.columns.iter().enumerate() {
                if c > 0 {
                    s.push(',');
                }
                write_number(&mut s, col[r]);
            }
            s.push('\n');
        }
        s
    }

    /// Reads a table written by [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str) -> Result<Table, CliError> {
        let bad = |m: String| CliError::Config(format!("malformed csv: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let mut names = Vec::new();
        let mut units = Vec::new();
        for h in header.split(',') {
            let (n, u) = h
                .strip_suffix(']')
                .and_then(|h| h.split_once(" ["))
                .ok_or_else(|| bad(format!("header cell '{h}'")))?;
            names.push(n.to_string());
            units.push(u.to_string());
        }
        let mut columns = vec![Vec::new(); names.len()];
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != names.len() {
                return Err(bad(format!("row '{line}'")));
            }
            for (c, cell) in cells.into_iter().enumerate() {
                columns[c].push(cell.parse::<f64>().map_err(|_| bad(format!("cell '{cell}'")))?);
            }
        }
        Ok(Table { names, units, columns })
    }
}

fn write_number(s: &mut String, v: f64) {
    if v.is_nan() {
        s.push_str("nan");
    } else {
        // shortest representation that parses back to the same bits
        write!(s, "{v:?}").unwrap();
    }
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
