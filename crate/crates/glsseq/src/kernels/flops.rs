//! Analytic flop accounting.
//!
//! Counts are closed-form functions of operand dimensions, recorded at call
//! time under a short kernel mnemonic. Because every count is a `u64`
//! derived from shapes alone, counters from parallel workers can be merged
//! in any order and still produce identical totals.

use std::collections::BTreeMap;

use serde::Serialize;

/// Kernels whose work grows as matrix-matrix operations (cubic in the large
/// dimension, or quadratic with a matrix of right-hand sides). The share of
/// total work landing in this class is the headline efficiency statistic.
const MATRIX_MATRIX_KERNELS: &[&str] = &["potrf", "trsm", "syrk", "gemm", "getri"];

/// Kernels that touch vectors or small systems: their per-call work is at
/// most quadratic with a vector operand.
const MATRIX_VECTOR_KERNELS: &[&str] = &["trsv", "gemv", "dot", "posv", "gesv"];

pub fn is_matrix_matrix_kernel(name: &str) -> bool {
    MATRIX_MATRIX_KERNELS.contains(&name)
}

pub fn is_matrix_vector_kernel(name: &str) -> bool {
    MATRIX_VECTOR_KERNELS.contains(&name)
}

/// Accumulates analytic flop counts, total and per kernel.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct FlopCounter {
    total: u64,
    by_kernel: BTreeMap<&'static str, u64>,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `flops` under `kernel`. Zero-cost calls still create the entry
    /// so the breakdown reflects which kernels ran.
    pub fn record(&mut self, kernel: &'static str, flops: u64) {
        self.total += flops;
        *self.by_kernel.entry(kernel).or_insert(0) += flops;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count recorded under one kernel mnemonic.
    pub fn kernel_total(&self, kernel: &str) -> u64 {
        self.by_kernel.get(kernel).copied().unwrap_or(0)
    }

    pub fn breakdown(&self) -> &BTreeMap<&'static str, u64> {
        &self.by_kernel
    }

    /// Folds another counter into this one. Addition of unsigned counts is
    /// associative and commutative, so merge order never changes the result.
    pub fn merge(&mut self, other: &FlopCounter) {
        self.total += other.total;
        for (kernel, flops) in &other.by_kernel {
            *self.by_kernel.entry(kernel).or_insert(0) += flops;
        }
    }

    /// Total over the matrix-matrix kernel class.
    pub fn matrix_matrix_total(&self) -> u64 {
        self.by_kernel
            .iter()
            .filter(|(k, _)| is_matrix_matrix_kernel(k))
            .map(|(_, v)| v)
            .sum()
    }

    /// Total over the matrix-vector kernel class.
    pub fn matrix_vector_total(&self) -> u64 {
        self.by_kernel
            .iter()
            .filter(|(k, _)| is_matrix_vector_kernel(k))
            .map(|(_, v)| v)
            .sum()
    }

    /// Fraction of all recorded work in the matrix-matrix class. Zero when
    /// nothing has been recorded.
    pub fn matrix_matrix_share(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matrix_matrix_total() as f64 / self.total as f64
        }
    }
}

pub mod count {
    //! Closed-form per-call costs. These are the single source of truth:
    //! the kernels record exactly these values and the cost model sums
    //! exactly these values, so predictions match measurements to the flop.

    /// Cholesky factorization of an `n x n` matrix.
    pub fn potrf(n: usize) -> u64 {
        let n = n as u64;
        n * (n + 1) * (2 * n + 1) / 6
    }

    /// Triangular solve with `cols` right-hand sides against an `n x n`
    /// factor.
    pub fn trsm(n: usize, cols: usize) -> u64 {
        (n as u64) * (n as u64) * (cols as u64)
    }

    /// Triangular solve with a single right-hand side.
    pub fn trsv(n: usize) -> u64 {
        trsm(n, 1)
    }

    /// Symmetric rank-k update: `A^T A` for an `rows x cols` operand.
    pub fn syrk(rows: usize, cols: usize) -> u64 {
        (rows as u64) * (cols as u64) * (cols as u64)
    }

    /// `A^T B` with `A` of shape `rows x a_cols` and `B` of `rows x b_cols`.
    pub fn gemm(rows: usize, a_cols: usize, b_cols: usize) -> u64 {
        2 * (rows as u64) * (a_cols as u64) * (b_cols as u64)
    }

    /// Matrix-vector product against an `rows x cols` operand.
    pub fn gemv(rows: usize, cols: usize) -> u64 {
        2 * (rows as u64) * (cols as u64)
    }

    /// Inner product of two `rows`-vectors.
    pub fn dot(rows: usize) -> u64 {
        gemv(rows, 1)
    }

    /// Symmetric positive definite solve of a `p x p` system: factor plus
    /// two triangular solves.
    pub fn posv(p: usize) -> u64 {
        let pu = p as u64;
        potrf(p) + 2 * pu * pu
    }

    /// Explicit inverse of a general `n x n` matrix.
    pub fn getri(n: usize) -> u64 {
        let n = n as u64;
        2 * n * n * n
    }

    /// General (LU-based) solve of a `p x p` system.
    pub fn gesv(p: usize) -> u64 {
        let pu = p as u64;
        2 * pu * pu * pu / 3 + 2 * pu * pu
    }
}
