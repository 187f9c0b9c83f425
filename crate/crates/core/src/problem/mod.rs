//! Linear systems from the two problem families, plus file I/O.

pub mod black_scholes;
pub mod mtx;
pub mod portfolio;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Where a linear system came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Portfolio,
    OptionStep,
    File,
}

/// A square system `A x = b`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub provenance: Provenance,
}

impl LinearSystem {
    pub fn new(a: SparseMatrix, b: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                n_rows: a.n_rows(),
                n_cols: a.n_cols(),
            });
        }
        if b.len() != a.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: a.n_rows(),
                actual: b.len(),
                context: "right-hand side",
            });
        }
        if !b.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        Ok(Self { a, b, provenance })
    }

    /// System from a file-sourced matrix with `b = A·1`, so the exact
    /// solution is the all-ones vector.
    pub fn with_unit_solution(a: SparseMatrix) -> Result<Self> {
        let ones = vec![1.0; a.n_cols()];
        let b = a.spmv(&ones)?;
        Self::new(a, b, Provenance::File)
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }
}
