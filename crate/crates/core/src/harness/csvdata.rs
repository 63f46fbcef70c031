//! CSV ingestion: header row, comma-separated, numeric cells.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::harness::config::Centering;
use crate::numerics::Matrix;
use crate::rng;

/// Parsed file: covariate columns in file order, response split off.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub covariate_names: Vec<String>,
    pub response_name: String,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl CsvTable {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Rows are reported by file line (the header is line 1).
pub fn read_csv_table(path: impl AsRef<Path>, response_column: &str) -> Result<CsvTable> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(file, response_column)
}

pub fn parse_csv(reader: impl std::io::Read, response_column: &str) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let resp = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| {
            Error::Config(format!(
                "response column {response_column:?} not found; columns are {headers:?}"
            ))
        })?;
    let covariate_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != resp)
        .map(|(_, h)| h.clone())
        .collect();
    let d = covariate_names.len();
    if d == 0 {
        return Err(Error::Config("the file has no covariate columns".into()));
    }
    let mut data = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                row,
                column: String::new(),
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: headers[j].clone(),
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: headers[j].clone(),
                    message: format!("{cell:?} is not finite"),
                });
            }
            if j == resp {
                y.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Config("the file has no data rows".into()));
    }
    Ok(CsvTable {
        covariate_names,
        response_name: response_column.to_string(),
        x: Matrix::from_vec(y.len(), d, data)?,
        y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Split {
    /// Fraction of rows used for training.
    Fraction(f64),
    /// Number of training rows.
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
    /// Covariate means subtracted from every row.
    pub covariate_means: Vec<f64>,
    pub response_mean: f64,
    /// Covariates that are constant over the rows used for centering.
    pub degenerate_columns: Vec<usize>,
    /// Shuffled row order: first the training rows, then the test rows.
    pub order: Vec<usize>,
}

/// Shuffles the rows with `seed`, splits, and centers.
pub fn split_table(
    table: &CsvTable,
    split: Split,
    seed: u64,
    centering: Centering,
) -> Result<SplitData> {
    let m = table.len();
    let n_train = match split {
        Split::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!(
                    "train fraction must lie in (0, 1), got {f}"
                )));
            }
            (f * m as f64).round() as usize
        }
        Split::Count(c) => c,
    };
    if n_train == 0 || n_train >= m {
        return Err(Error::Config(format!(
            "split leaves {n_train} training rows out of {m}; both parts must be non-empty"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(seed, &[]));
    let basis: &[usize] = match centering {
        Centering::Full => &order,
        Centering::Train => &order[..n_train],
    };
    let d = table.dim();
    let b = basis.len() as f64;
    let mut means = vec![0.0; d];
    for &i in basis {
        for (a, v) in means.iter_mut().zip(table.x.row(i)) {
            *a += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= b);
    let response_mean = basis.iter().map(|&i| table.y[i]).sum::<f64>() / b;
    let degenerate_columns: Vec<usize> = (0..d)
        .filter(|&j| {
            let first = table.x[(basis[0], j)];
            basis.iter().all(|&i| table.x[(i, j)] == first)
        })
        .collect();

    let build = |rows: &[usize]| -> Result<Dataset> {
        let mut x = table.x.select_rows(rows);
        for i in 0..rows.len() {
            for (v, mu) in x.row_mut(i).iter_mut().zip(&means) {
                *v -= mu;
            }
        }
        for &j in &degenerate_columns {
            for i in 0..rows.len() {
                x[(i, j)] = 0.0;
            }
        }
        let y = rows.iter().map(|&i| table.y[i] - response_mean).collect();
        Dataset::new(x, Some(y))
    };
    Ok(SplitData {
        train: build(&order[..n_train])?,
        test: build(&order[n_train..])?,
        covariate_means: means,
        response_mean,
        degenerate_columns,
        order,
    })
}

pub fn load_csv_dataset(
    path: impl AsRef<Path>,
    response_column: &str,
    split: Split,
    seed: u64,
    centering: Centering,
) -> Result<SplitData> {
    split_table(
        &read_csv_table(path, response_column)?,
        split,
        seed,
        centering,
    )
}
