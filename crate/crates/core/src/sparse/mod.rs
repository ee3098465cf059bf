//! Sparse matrix storage and a direct LU factorization with partial pivoting.
//!
//! Both Newton loops (device and circuit) assemble triplets, finalize them
//! into a [`SparseMatrix`], and factor once per iteration. Factorizations are
//! immutable and can be shared between workers for repeated solves.

mod lu;
mod matrix;

pub use lu::Factorization;
pub use matrix::{SparseMatrix, Triplet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("matrix is not square ({n_rows}x{n_cols})")]
    NotSquare { n_rows: usize, n_cols: usize },
    #[error("matrix is singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
