//! Shared helpers for unit tests: deterministic fills and well-conditioned
//! instances, independent of the dataset generator they help test.

use crate::kernels::{syrk_lower, DenseMatrix, FlopCounter, SymmetricMatrix};

/// Deterministic pseudo-random values in [-1, 1) from a 64-bit LCG.
pub(crate) fn lcg_fill(len: usize, seed: u64) -> Vec<f64> {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

/// Well-conditioned SPD matrix: G^T G plus a diagonal shift of n.
pub(crate) fn spd_matrix(n: usize, seed: u64) -> SymmetricMatrix {
    let g = DenseMatrix::from_column_major(n, n, lcg_fill(n * n, seed));
    let mut fl = FlopCounter::new();
    let mut s = syrk_lower(&g, &mut fl);
    for i in 0..n {
        let v = s.get(i, i) + n as f64;
        s.set_lower(i, i, v);
    }
    s
}

/// Dense matrix with deterministic entries in [-1, 1).
pub(crate) fn dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::from_column_major(rows, cols, lcg_fill(rows * cols, seed))
}

/// Concatenates the columns of `left` and `right` (shared row count).
pub(crate) fn concat_cols(left: &DenseMatrix, right: &DenseMatrix) -> DenseMatrix {
    assert_eq!(left.rows(), right.rows());
    let rows = left.rows();
    let mut out = DenseMatrix::new(rows, left.cols() + right.cols());
    for c in 0..left.cols() {
        out.col_mut(c).copy_from_slice(left.col(c));
    }
    for c in 0..right.cols() {
        out.col_mut(left.cols() + c).copy_from_slice(right.col(c));
    }
    out
}

/// Largest relative deviation between two coefficient vectors, scaled by
/// the reference's largest magnitude.
pub(crate) fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    got.iter()
        .zip(want)
        .fold(0.0f64, |m, (g, w)| m.max((g - w).abs()))
        / scale
}
