//! Sparse linear solvers for portfolio KKT systems and implicit
//! Black-Scholes steps: block-QR preconditioned restarted FGMRES, with the
//! block size chosen per restart cycle by a PPO-trained policy.

// NaN must fail the range checks, which `!(x > 0.0)` guarantees.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dense;
pub mod error;
pub mod fgmres;
pub mod ppo;
pub mod precond;
pub mod problem;
pub mod sparse;

pub use error::{Error, Result};
pub use sparse::SparseMatrix;
