//! Compressed sparse row storage for square (and rectangular) real matrices.
//!
//! Matrices are kept in canonical form: column indices strictly increasing
//! within each row, duplicates summed at construction and explicit zeros
//! dropped. All consumers rely on that ordering for deterministic traversal.

use crate::error::{Error, Result};

/// Real matrix in compressed sparse row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a canonical CSR matrix from `(row, col, value)` triplets.
    ///
    /// Duplicate coordinates are summed, entries that end up exactly zero are
    /// dropped. Any index outside the declared shape is rejected with the
    /// offending triplet.
    pub fn from_triplets(
        entries: &[(usize, usize, f64)],
        n_rows: usize,
        n_cols: usize,
    ) -> Result<Self> {
        for &(row, col, value) in entries {
            if row >= n_rows || col >= n_cols {
                return Err(Error::TripletOutOfRange {
                    row,
                    col,
                    value,
                    n_rows,
                    n_cols,
                });
            }
        }

        // Counting sort by row, then a per-row sort by column keeps the
        // duplicate summation order stable for a given input order.
        let mut counts = vec![0usize; n_rows + 1];
        for &(row, _, _) in entries {
            counts[row + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut bucket: Vec<(usize, f64)> = vec![(0, 0.0); entries.len()];
        for &(row, col, value) in entries {
            bucket[next[row]] = (col, value);
            next[row] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_ptr.push(0);
        for row in 0..n_rows {
            let slice = &mut bucket[counts[row]..counts[row + 1]];
            slice.sort_by_key(|&(c, _)| c);
            let mut iter = slice.iter().peekable();
            while let Some(&(col, mut acc)) = iter.next() {
                while let Some(&&(c, v)) = iter.peek() {
                    if c != col {
                        break;
                    }
                    acc += v;
                    iter.next();
                }
                if acc != 0.0 {
                    col_idx.push(col);
                    values.push(acc);
                }
            }
            row_ptr.push(col_idx.len());
        }

        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Square identity matrix.
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Entry lookup by binary search; absent entries read as zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries in row-major canonical order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Row-major dense copy. Intended for tests and small systems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }

    /// `y = A x`, checking dimensions.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                actual: x.len(),
                context: "spmv input",
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` into a caller-owned buffer. Lengths must already agree.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }
}

/// Free-function form of [`SparseMatrix::from_triplets`].
pub fn csr_from_triplets(
    entries: &[(usize, usize, f64)],
    n_rows: usize,
    n_cols: usize,
) -> Result<SparseMatrix> {
    SparseMatrix::from_triplets(entries, n_rows, n_cols)
}

/// Free-function form of [`SparseMatrix::spmv`].
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_from_triplets() {
        let a = csr_from_triplets(&[(0, 0, 1.0), (1, 1, 1.0)], 2, 2).unwrap();
        assert_eq!(a, SparseMatrix::identity(2));
    }

    #[test]
    fn duplicates_are_summed() {
        let a = csr_from_triplets(&[(0, 0, 1.0), (0, 0, 2.0)], 1, 1).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn cancelling_duplicates_dropped() {
        let a = csr_from_triplets(&[(0, 1, 2.0), (0, 1, -2.0), (1, 0, 0.0)], 2, 2).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.row_ptr(), &[0, 0, 0]);
    }

    #[test]
    fn out_of_range_column_rejected() {
        let err = csr_from_triplets(&[(0, 5, 1.0)], 2, 2).unwrap_err();
        match err {
            Error::TripletOutOfRange { row, col, .. } => assert_eq!((row, col), (0, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn columns_sorted_within_rows() {
        let a = csr_from_triplets(&[(0, 2, 1.0), (0, 0, 2.0), (0, 1, 3.0)], 1, 3).unwrap();
        assert_eq!(a.col_idx(), &[0, 1, 2]);
        assert_eq!(a.values(), &[2.0, 3.0, 1.0]);
    }

    #[test]
    fn spmv_examples() {
        let i = SparseMatrix::identity(2);
        assert_eq!(i.spmv(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);

        let a = csr_from_triplets(&[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)], 2, 2).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        assert_eq!(a.spmv(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let a = SparseMatrix::identity(3);
        assert!(matches!(
            a.spmv(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, actual: 1, .. })
        ));
    }

    fn dense_matvec(d: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        d.iter()
            .map(|row| {
                let mut s = 0.0;
                for j in 0..row.len() {
                    s += row[j] * x[j];
                }
                s
            })
            .collect()
    }

    proptest! {
        #[test]
        fn spmv_matches_dense(
            n in 1usize..30,
            entries in proptest::collection::vec((0usize..30, 0usize..30, -10.0f64..10.0), 0..200),
            xs in proptest::collection::vec(-5.0f64..5.0, 30),
        ) {
            let entries: Vec<_> = entries.into_iter().map(|(i, j, v)| (i % n, j % n, v)).collect();
            let a = csr_from_triplets(&entries, n, n).unwrap();
            let x = &xs[..n];
            let y = a.spmv(x).unwrap();
            let yd = dense_matvec(&a.to_dense(), x);
            let scale = yd.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for (u, v) in y.iter().zip(&yd) {
                prop_assert!((u - v).abs() <= 1e-13 * scale);
            }
            // canonical form
            prop_assert_eq!(a.row_ptr()[0], 0);
            prop_assert_eq!(*a.row_ptr().last().unwrap(), a.nnz());
            for i in 0..n {
                let (cols, _) = a.row(i);
                prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
