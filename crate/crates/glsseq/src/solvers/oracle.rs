//! Brute-force reference solution through explicit inverses.

use crate::kernels::{
    gemm_t, invert_general, matvec_t, DenseMatrix, FlopCounter, KernelError, SymmetricMatrix,
};

/// Computes `b = (X^T M^-1 X)^-1 X^T M^-1 y` literally, inverting both
/// matrices explicitly.
///
/// Numerically inferior to every production path on purpose: it shares no
/// code with the factorization-based solvers beyond the elementary product
/// kernels, which makes it a trustworthy cross-check. Its work is not
/// recorded anywhere; verification effort must never pollute a run's flop
/// accounting.
///
/// Fails with `Singular` when `M` or the normal-equation matrix is not
/// invertible, which is exactly the rank-deficient case the solvers flag.
pub fn solve_explicit_inverse(
    m: &SymmetricMatrix,
    x: &DenseMatrix,
    y: &[f64],
) -> Result<Vec<f64>, KernelError> {
    let mut scratch = FlopCounter::new();
    let minv = invert_general(&m.to_dense(), &mut scratch)?;
    // gemm_t/matvec_t apply the transpose of their first operand, so feed
    // them M^-T to get plain M^-1 products.
    let minv_t = minv.transpose();
    let miy = matvec_t(&minv_t, y, &mut scratch)?;
    let mix = gemm_t(&minv_t, x, &mut scratch)?;
    let s = gemm_t(x, &mix, &mut scratch)?;
    let v = matvec_t(x, &miy, &mut scratch)?;
    let sinv = invert_general(&s, &mut scratch)?;
    matvec_t(&sinv.transpose(), &v, &mut scratch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    #[test]
    fn identity_covariance_with_orthonormal_design_collapses_to_projection() {
        let n = 5;
        let m = {
            let mut s = SymmetricMatrix::new(n);
            for i in 0..n {
                s.set_lower(i, i, 1.0);
            }
            s
        };
        // Columns e_0 and e_2: b must pick observations 0 and 2.
        let mut x = DenseMatrix::new(n, 2);
        x.set(0, 0, 1.0);
        x.set(2, 1, 1.0);
        let y = [3.0, -1.0, 7.0, 2.0, 0.5];
        let b = solve_explicit_inverse(&m, &x, &y).unwrap();
        assert!((b[0] - 3.0).abs() < 1e-12);
        assert!((b[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_rank_deficient_design() {
        let n = 6;
        let m = testkit::spd_matrix(n, 9);
        // Two identical columns: X^T M^-1 X is singular.
        let col = testkit::lcg_fill(n, 4);
        let mut x = DenseMatrix::new(n, 2);
        x.col_mut(0).copy_from_slice(&col);
        x.col_mut(1).copy_from_slice(&col);
        let y = testkit::lcg_fill(n, 5);
        assert!(matches!(
            solve_explicit_inverse(&m, &x, &y),
            Err(KernelError::Singular { .. })
        ));
    }
}
