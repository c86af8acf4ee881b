//! Design matrix with named columns, plus the `features.csv` codec.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows of features `x` with response `y` (cycle life) and the cell id of
/// each row. Column order is fixed by `feature_names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub cell_ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        cell_ids: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
    ) -> Result<Self> {
        if x.len() != y.len() || x.len() != cell_ids.len() {
            return Err(Error::Domain(format!(
                "row counts differ: x {}, y {}, ids {}",
                x.len(),
                y.len(),
                cell_ids.len()
            )));
        }
        if let Some(row) = x.iter().position(|r| r.len() != feature_names.len()) {
            return Err(Error::Domain(format!(
                "row {row} has {} values, expected {}",
                x[row].len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = cell_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateCell(dup.clone()));
        }
        Ok(Self {
            feature_names,
            cell_ids,
            x,
            y,
        })
    }

    /// Dataset without ids; rows are named `row0`, `row1`, ...
    pub fn from_xy(feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let ids = (0..x.len()).map(|i| format!("row{i}")).collect();
        Self::new(feature_names, ids, x, y)
    }

    pub fn empty(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            cell_ids: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.iter().map(|r| r[j]).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            cell_ids: indices.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Rows whose cell id is in `ids`, keeping the current row order.
    pub fn filter_ids(&self, ids: &BTreeSet<String>) -> Self {
        let idx: Vec<usize> = (0..self.n_rows())
            .filter(|&i| ids.contains(&self.cell_ids[i]))
            .collect();
        self.select_rows(&idx)
    }

    /// All rows except `i`.
    pub fn without_row(&self, i: usize) -> Self {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&k| k != i).collect();
        self.select_rows(&idx)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["cell_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("cycle_life".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.cell_ids[i].clone()];
            rec.extend(self.x[i].iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(std::io::Error::new(
                io.kind(),
                format!("{}: {io}", path.display()),
            )),
            other => Error::Parse {
                file: path.to_path_buf(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;
        let headers = reader.headers()?.clone();
        let n = headers.len();
        if n < 2 || &headers[0] != "cell_id" || &headers[n - 1] != "cycle_life" {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line: 1,
                message: "expected header `cell_id,<features...>,cycle_life`".into(),
            });
        }
        let names: Vec<String> = headers
            .iter()
            .skip(1)
            .take(n - 2)
            .map(str::to_string)
            .collect();
        let (mut ids, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    file: path.to_path_buf(),
                    line,
                    message: format!("`{s}`: {e}"),
                })
            };
            ids.push(rec[0].to_string());
            x.push(
                (1..n - 1)
                    .map(|j| parse(&rec[j]))
                    .collect::<Result<Vec<_>>>()?,
            );
            y.push(parse(&rec[n - 1])?);
        }
        Self::new(names, ids, x, y)
    }
}
