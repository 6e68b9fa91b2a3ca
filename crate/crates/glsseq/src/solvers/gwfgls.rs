//! The explicit-inverse baseline.
//!
//! This reproduces, on purpose, the classic wasteful recipe: invert the
//! covariance outright, keep `W = M^-1 X` around, rebuild the normal
//! equations from `W^T X` per problem, and solve them with a general LU
//! because the numerically broken symmetry of `W^T X` (an explicit inverse
//! sandwiched between transposes) cannot be trusted bit-for-bit. Its flop
//! counter is the benchmark yardstick the faster solvers are compared
//! against; do not "fix" its inefficiencies.

use crate::kernels::{
    gemm_t, invert_general, matvec_t, solve_general_small, DenseMatrix, FlopCounter, KernelError,
    SymmetricMatrix,
};

use super::{covariance_error, SolutionRecord, SolverError, XrBlock};

/// Solves the sequence with the explicit-inverse recipe. Serial by design;
/// this rung exists to be measured, not to win.
pub fn solve_sequence_gwfgls<I>(
    cov: &SymmetricMatrix,
    xl: &DenseMatrix,
    blocks: I,
    y: &[f64],
    flops: &mut FlopCounter,
) -> Result<Vec<SolutionRecord>, SolverError>
where
    I: IntoIterator<Item = XrBlock>,
{
    let n = cov.dim();
    if xl.rows() != n || y.len() != n {
        return Err(SolverError::InvalidDims(format!(
            "covariance dim {n} vs X_L rows {} vs observations {}",
            xl.rows(),
            y.len()
        )));
    }
    let l = xl.cols();

    let minv = invert_general(&cov.to_dense(), flops).map_err(covariance_error)?;
    // gemm_t/matvec_t transpose their first operand, so products against
    // `minv` below compute M^-T sandwiches; transposed back out they give
    // exactly W^T = X^T M^-1, the quantity this recipe is built around.
    let w_l = if l > 0 {
        gemm_t(&minv, xl, flops)?
    } else {
        DenseMatrix::new(n, 0)
    };

    let mut records = Vec::new();
    for block in blocks {
        let r = block.panel_width();
        let p = l + r;
        for i in 0..block.count() {
            let index = block.first_index() + i;
            let panel = DenseMatrix::from_column_major(n, r, block.panel(i).to_vec());

            // Per-problem W_R, one matrix-vector sweep per panel column:
            // the memory-bound pattern that dooms this algorithm.
            let mut w = DenseMatrix::new(n, p);
            let mut x = DenseMatrix::new(n, p);
            for c in 0..l {
                w.col_mut(c).copy_from_slice(w_l.col(c));
                x.col_mut(c).copy_from_slice(xl.col(c));
            }
            for c in 0..r {
                let wr = matvec_t(&minv, panel.col(c), flops)?;
                w.col_mut(l + c).copy_from_slice(&wr);
                x.col_mut(l + c).copy_from_slice(panel.col(c));
            }

            let s = gemm_t(&w, &x, flops)?;
            let v = matvec_t(&w, y, flops)?;
            let rec = match solve_general_small(&s, &v, flops) {
                Ok(b) => SolutionRecord::ok(index, b),
                Err(KernelError::Singular { .. }) => SolutionRecord::rank_deficient(index, p),
                Err(e) => return Err(e.into()),
            };
            records.push(rec);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{solve_explicit_inverse, SolveStatus};
    use crate::testkit;

    fn identity(n: usize) -> SymmetricMatrix {
        let mut s = SymmetricMatrix::new(n);
        for i in 0..n {
            s.set_lower(i, i, 1.0);
        }
        s
    }

    #[test]
    fn identity_covariance_reduces_to_normal_equations() {
        // With M = I the weights W equal X, so the solve is ordinary least
        // squares; check against an orthonormal design where b = X^T y.
        let n = 6;
        let mut xl = DenseMatrix::new(n, 1);
        xl.set(1, 0, 1.0);
        let mut panel = DenseMatrix::new(n, 1);
        panel.set(4, 0, 1.0);
        let y = [1.0, -2.0, 3.0, 0.25, 8.0, -1.5];

        let mut fl = FlopCounter::new();
        let recs = solve_sequence_gwfgls(
            &identity(n),
            &xl,
            vec![XrBlock::new(0, 1, panel)],
            &y,
            &mut fl,
        )
        .unwrap();
        assert_eq!(recs[0].status, SolveStatus::Ok);
        assert!((recs[0].b[0] - -2.0).abs() <= 1e-12);
        assert!((recs[0].b[1] - 8.0).abs() <= 1e-12);
    }

    #[test]
    fn seeded_suite_matches_oracle() {
        let n = 48;
        let (l, r, m_count) = (3, 1, 24);
        let cov = testkit::spd_matrix(n, 161);
        let xl = testkit::dense(n, l, 162);
        let y = testkit::lcg_fill(n, 163);
        let panels = testkit::dense(n, m_count * r, 164);

        let mut fl = FlopCounter::new();
        let recs = solve_sequence_gwfgls(
            &cov,
            &xl,
            vec![XrBlock::new(0, m_count, panels.clone())],
            &y,
            &mut fl,
        )
        .unwrap();

        for (i, rec) in recs.iter().enumerate() {
            let panel = DenseMatrix::from_column_major(n, r, panels.cols_slice(i * r, r).to_vec());
            let x = testkit::concat_cols(&xl, &panel);
            let oracle = solve_explicit_inverse(&cov, &x, &y).unwrap();
            assert!(
                testkit::max_rel_err(&rec.b, &oracle) <= 1e-8,
                "problem {i} drifted from oracle"
            );
        }
    }

    #[test]
    fn singular_covariance_aborts() {
        let cov = SymmetricMatrix::new(4);
        let xl = testkit::dense(4, 1, 1);
        let mut fl = FlopCounter::new();
        let out = solve_sequence_gwfgls(
            &cov,
            &xl,
            vec![XrBlock::new(0, 1, testkit::dense(4, 1, 2))],
            &[1.0, 2.0, 3.0, 4.0],
            &mut fl,
        );
        assert!(matches!(
            out,
            Err(SolverError::CovarianceSingular { pivot_index: 0 })
        ));
    }
}
