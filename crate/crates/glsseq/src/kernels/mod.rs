//! Dense linear algebra kernels and their supporting containers.
//!
//! All kernels work on column-major storage, take an explicit
//! [`FlopCounter`] and record an analytic operation count derived from the
//! operand dimensions alone. Counts never depend on data values, timing or
//! thread schedule, so two runs over equal shapes always report equal work.

mod flops;
mod matrix;
mod ops;

pub use flops::{is_matrix_matrix_kernel, is_matrix_vector_kernel, FlopCounter};
pub use matrix::{DenseMatrix, LowerTriangular, SymmetricMatrix};
pub(crate) use ops::tri_solve_forward_raw;
pub use ops::{
    cholesky_lower, gemm_t, invert_general, matvec_t, solve_general_small, solve_spd_small,
    syrk_lower, tri_solve_forward, tri_solve_forward_in_place, tri_solve_forward_vec, BLOCK,
    SMALL_SOLVE_LIMIT,
};

pub mod cost {
    //! Analytic per-call flop formulas, shared by the kernels (which record
    //! them) and the cost model (which sums them ahead of time).
    pub use super::flops::count::*;
}

/// Errors reported by the dense kernels.
#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    /// A symmetric factorization hit a pivot at or below tolerance. The
    /// index identifies the offending row/column of the input.
    #[error("matrix is not positive definite: pivot {pivot_index} at or below tolerance")]
    NotSpd { pivot_index: usize },

    /// An LU factorization hit a pivot below tolerance.
    #[error("matrix is singular: pivot {pivot_index} below tolerance")]
    Singular { pivot_index: usize },

    /// Operand shapes are incompatible with the requested operation.
    #[error("{op}: dimension mismatch ({detail})")]
    DimensionMismatch { op: &'static str, detail: String },

    /// A small-system solver was handed a system above its size bound.
    #[error("{op}: system of dim {dim} exceeds the small-solve limit {limit}")]
    SmallSystemTooLarge {
        op: &'static str,
        dim: usize,
        limit: usize,
    },
}
