//! Block-diagonal preconditioner `M = diag(A_1, ..., A_p)` backed by one
//! Householder QR per diagonal block.

use crate::dense::{dense_qr, extract_diagonal_block, QrFactor, DEFAULT_REG_EPS};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Contiguous partition of `[0, n)` into blocks of a nominal size `k`.
///
/// Every block has extent `k` except a trailing remainder block when `k`
/// does not divide `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    n: usize,
    nominal_size: usize,
    boundaries: Vec<usize>,
}

impl BlockPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nominal_size(&self) -> usize {
        self.nominal_size
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn num_blocks(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// `(start, len)` for each block in order.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1] - w[0]))
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks().map(|(_, len)| len).collect()
    }
}

/// Plans `ceil(n / k)` contiguous blocks.
pub fn plan_partition(n: usize, k: usize) -> Result<BlockPartition> {
    if k == 0 || k > n {
        return Err(Error::BlockSizeOutOfRange { k, n });
    }
    let mut boundaries: Vec<usize> = (0..n).step_by(k).collect();
    boundaries.push(n);
    Ok(BlockPartition {
        n,
        nominal_size: k,
        boundaries,
    })
}

/// Factored block-diagonal part of a matrix under a [`BlockPartition`].
#[derive(Debug, Clone)]
pub struct BlockQrPreconditioner {
    partition: BlockPartition,
    factors: Vec<QrFactor>,
    reg_eps: f64,
}

impl BlockQrPreconditioner {
    /// Extracts and factors each diagonal block of `a`.
    ///
    /// Singular blocks are accepted here; small pivots are clamped when the
    /// preconditioner is applied.
    pub fn build(a: &SparseMatrix, partition: BlockPartition, reg_eps: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                n_rows: a.n_rows(),
                n_cols: a.n_cols(),
            });
        }
        if a.n_rows() != partition.n {
            return Err(Error::DimensionMismatch {
                expected: partition.n,
                actual: a.n_rows(),
                context: "preconditioner partition",
            });
        }
        if !(reg_eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reg_eps must be positive, got {reg_eps}"
            )));
        }
        let factors = partition
            .blocks()
            .map(|(start, len)| dense_qr(&extract_diagonal_block(a, start, len)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition,
            factors,
            reg_eps,
        })
    }

    /// Convenience constructor: plan with nominal size `k` and the default
    /// regularization.
    pub fn with_block_size(a: &SparseMatrix, k: usize) -> Result<Self> {
        Self::build(a, plan_partition(a.n_rows(), k)?, DEFAULT_REG_EPS)
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn factors(&self) -> &[QrFactor] {
        &self.factors
    }

    pub fn reg_eps(&self) -> f64 {
        self.reg_eps
    }

    pub fn block_size(&self) -> usize {
        self.partition.nominal_size
    }

    /// `z = M⁻¹ r`, solving each block independently.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.partition.n {
            return Err(Error::DimensionMismatch {
                expected: self.partition.n,
                actual: r.len(),
                context: "preconditioner apply",
            });
        }
        let mut z = vec![0.0; r.len()];
        self.apply_into(r, &mut z);
        Ok(z)
    }

    pub(crate) fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        for ((start, len), f) in self.partition.blocks().zip(&self.factors) {
            f.solve_into(&r[start..start + len], self.reg_eps, &mut z[start..start + len]);
        }
    }
}
