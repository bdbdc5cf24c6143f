//! Response/covariate containers and CSV ingestion.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Name given to the column of ones prepended when an intercept is requested.
pub const INTERCEPT_NAME: &str = "(Intercept)";

/// Responses `y` (length n) and design matrix `x` (n × p).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated column names `x0, x1, ...`.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(y, x, names)
    }

    pub fn with_names(y: DVector<f64>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::InvalidData(format!(
                "response has {} rows but design has {}",
                y.len(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("design matrix has no columns".into()));
        }
        if names.len() != x.ncols() {
            return Err(Error::InvalidData("one name per design column required".into()));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in dataset".into()));
        }
        Ok(Self { y, x, names })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(y: &[f64], rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidData("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(DVector::from_column_slice(y), x)
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of design columns.
    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// First `n` observations.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n > self.n() {
            return Err(Error::InvalidData(format!(
                "requested {n} rows from a dataset of {}",
                self.n()
            )));
        }
        Ok(Self {
            y: self.y.rows(0, n).into_owned(),
            x: self.x.rows(0, n).into_owned(),
            names: self.names.clone(),
        })
    }

    /// Stacks the rows of `other` below `self`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.ncols() {
            return Err(Error::InvalidData("column counts differ".into()));
        }
        let n = self.n() + other.n();
        let p = self.ncols();
        let x = DMatrix::from_fn(n, p, |i, j| {
            if i < self.n() {
                self.x[(i, j)]
            } else {
                other.x[(i - self.n(), j)]
            }
        });
        let y = DVector::from_iterator(n, self.y.iter().chain(other.y.iter()).copied());
        Ok(Self {
            y,
            x,
            names: self.names.clone(),
        })
    }

    /// Numerical rank check via the smallest Cholesky pivot of `XᵀX`.
    pub fn check_full_rank(&self) -> Result<()> {
        let mut gram = self.x.tr_mul(&self.x);
        // Scale to unit diagonal so the pivot threshold is dimensionless.
        let d: Vec<f64> = (0..gram.ncols()).map(|j| gram[(j, j)].sqrt()).collect();
        if d.contains(&0.0) {
            return Err(Error::InvalidData("design has an all-zero column".into()));
        }
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                gram[(i, j)] /= d[i] * d[j];
            }
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::InvalidData("design matrix is rank deficient".into()))?;
        let min_pivot = chol.l().diagonal().iter().copied().fold(f64::INFINITY, f64::min);
        if min_pivot < 1e-7 {
            return Err(Error::InvalidData(format!(
                "design matrix is numerically rank deficient (pivot {min_pivot:.2e})"
            )));
        }
        Ok(())
    }

    /// Reads a header-bearing CSV. `response` names the response column; every
    /// other column is a covariate. With `intercept`, a column of ones named
    /// [`INTERCEPT_NAME`] is prepended.
    pub fn from_csv<R: Read>(reader: R, response: &str, intercept: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidData(format!("CSV header: {e}")))?
            .clone();
        let resp_col = headers
            .iter()
            .position(|h| h.trim() == response)
            .ok_or_else(|| Error::InvalidData(format!("no response column '{response}'")))?;
        let cov_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != resp_col).collect();

        let mut y = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidData(format!("CSV record: {e}")))?;
            let parse = |c: usize| -> Result<f64> {
                let field = record.get(c).unwrap_or("").trim();
                field.parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}: column '{}' is not a number: '{field}'",
                        line + 2,
                        &headers[c]
                    ))
                })
            };
            y.push(parse(resp_col)?);
            let mut row = Vec::with_capacity(cov_cols.len() + usize::from(intercept));
            if intercept {
                row.push(1.0);
            }
            for &c in &cov_cols {
                row.push(parse(c)?);
            }
            rows.push(row);
        }
        if y.is_empty() {
            return Err(Error::InvalidData("CSV has no data rows".into()));
        }
        let mut names = Vec::new();
        if intercept {
            names.push(INTERCEPT_NAME.to_string());
        }
        names.extend(cov_cols.iter().map(|&c| headers[c].trim().to_string()));
        let p = names.len();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::with_names(DVector::from_vec(y), x, names)
    }
}
