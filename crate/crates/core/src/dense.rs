//! Small dense blocks and their Householder QR factorization.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Default relative pivot floor used when solving with a singular `R`.
pub const DEFAULT_REG_EPS: f64 = 1e-10;

/// Square dense block stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    size: usize,
    values: Vec<f64>,
}

impl DenseBlock {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                actual: values.len(),
                context: "dense block values",
            });
        }
        Ok(Self { size, values })
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            values: vec![0.0; size * size],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(size, values)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.values
            .chunks_exact(self.size.max(1))
            .take(self.size)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `block = Q R` with `Q` orthogonal and `R` upper triangular, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactor {
    size: usize,
    q: Vec<f64>,
    r: Vec<f64>,
}

impl QrFactor {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// Solves `R z = Qᵀ rhs`, clamping small pivots. See [`qr_solve`].
    pub fn solve(&self, rhs: &[f64], reg_eps: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        self.solve_into(rhs, reg_eps, &mut out);
        out
    }

    pub(crate) fn solve_into(&self, rhs: &[f64], reg_eps: f64, z: &mut [f64]) {
        let s = self.size;
        debug_assert_eq!(rhs.len(), s);
        debug_assert_eq!(z.len(), s);
        // z <- Qᵀ rhs
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = (0..s).map(|i| self.q[i * s + j] * rhs[i]).sum();
        }
        let max_diag = (0..s).map(|i| self.r[i * s + i].abs()).fold(0.0, f64::max);
        let floor = reg_eps * max_diag.max(1.0);
        for i in (0..s).rev() {
            let row = &self.r[i * s..(i + 1) * s];
            let mut acc = z[i];
            for j in i + 1..s {
                acc -= row[j] * z[j];
            }
            let d = row[i];
            let pivot = if d.abs() < floor {
                if d.is_sign_negative() && d != 0.0 {
                    -floor
                } else {
                    floor
                }
            } else {
                d
            };
            z[i] = acc / pivot;
        }
    }
}

/// Householder QR of a square block.
///
/// Columns whose sub-diagonal part is already zero are left untouched, so
/// triangular inputs factor with `Q = I`. Singular blocks are accepted; `R`
/// may then carry zero diagonal entries.
pub fn dense_qr(block: &DenseBlock) -> Result<QrFactor> {
    if !block.values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("dense block"));
    }
    let s = block.size;
    let mut r = block.values.clone();
    let mut q = vec![0.0; s * s];
    for i in 0..s {
        q[i * s + i] = 1.0;
    }
    let mut v = vec![0.0; s];

    for k in 0..s.saturating_sub(1) {
        let tail: f64 = (k + 1..s).map(|i| r[i * s + k] * r[i * s + k]).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = r[k * s + k];
        let norm = (x0 * x0 + tail).sqrt();
        let alpha = if x0 >= 0.0 { -norm } else { norm };

        v[k] = x0 - alpha;
        for i in k + 1..s {
            v[i] = r[i * s + k];
        }
        let vtv = v[k] * v[k] + tail;

        // R <- H R on rows k..s
        for j in k..s {
            let proj: f64 = (k..s).map(|i| v[i] * r[i * s + j]).sum();
            let f = 2.0 * proj / vtv;
            for i in k..s {
                r[i * s + j] -= f * v[i];
            }
        }
        // Q <- Q H on columns k..s
        for row in 0..s {
            let proj: f64 = (k..s).map(|i| q[row * s + i] * v[i]).sum();
            let f = 2.0 * proj / vtv;
            for i in k..s {
                q[row * s + i] -= f * v[i];
            }
        }

        r[k * s + k] = alpha;
        for i in k + 1..s {
            r[i * s + k] = 0.0;
        }
    }

    Ok(QrFactor { size: s, q, r })
}

/// Solves `R z = Qᵀ rhs` by back substitution.
///
/// Each pivot `d` with `|d| < reg_eps * max(1, max |R_ii|)` is replaced by
/// that floor with the sign of `d` (positive for exact zeros), so the result
/// is always finite.
pub fn qr_solve(f: &QrFactor, rhs: &[f64], reg_eps: f64) -> Result<Vec<f64>> {
    if rhs.len() != f.size {
        return Err(Error::DimensionMismatch {
            expected: f.size,
            actual: rhs.len(),
            context: "qr_solve rhs",
        });
    }
    if !(reg_eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reg_eps must be positive, got {reg_eps}"
        )));
    }
    Ok(f.solve(rhs, reg_eps))
}

/// Dense copy of the diagonal window `[start, start + size)` of a square matrix.
pub fn extract_diagonal_block(a: &SparseMatrix, start: usize, size: usize) -> Result<DenseBlock> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        });
    }
    let end = start
        .checked_add(size)
        .filter(|&e| e <= a.n_rows())
        .ok_or(Error::WindowOutOfRange {
            start,
            end: start.saturating_add(size),
            n: a.n_rows(),
        })?;
    let mut block = DenseBlock::zeros(size);
    for i in start..end {
        let (cols, vals) = a.row(i);
        let lo = cols.partition_point(|&c| c < start);
        for (&j, &v) in cols[lo..].iter().zip(&vals[lo..]) {
            if j >= end {
                break;
            }
            block.values[(i - start) * size + (j - start)] = v;
        }
    }
    Ok(block)
}
