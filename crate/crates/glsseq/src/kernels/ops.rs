//! The dense kernels.
//!
//! Every kernel follows two rules that the rest of the crate leans on:
//!
//! 1. The arithmetic applied to any output element, including its order, is
//!    a fixed function of the operand dimensions. Rerunning a kernel on the
//!    same bytes yields the same bytes, regardless of batching or threads.
//! 2. The recorded flop count is the closed form from [`super::cost`],
//!    charged when the kernel is invoked. Early exits (a failed pivot)
//!    still charge the full call, so accounting stays shape-deterministic.
//!
//! Triangular solves are column-separable: the work done for one
//! right-hand-side column never looks at another column, so a batch of
//! columns can be split across calls, blocks or threads and each column
//! still gets bitwise-identical treatment.

// Pivot checks are written `!(pivot > tol)` on purpose: the negation is
// what routes NaN pivots to the failure path. Index-based loops are also
// deliberate; they pin the accumulation order rule (1) relies on.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use super::flops::{count, FlopCounter};
use super::matrix::{DenseMatrix, LowerTriangular, SymmetricMatrix};
use super::KernelError;

/// Column width of the blocked factor and solve kernels.
pub const BLOCK: usize = 64;

/// Largest system accepted by the small dense solvers.
pub const SMALL_SOLVE_LIMIT: usize = 64;

/// Dot product with a fixed four-lane accumulation split.
///
/// The lane assignment depends only on the vector length, so the rounding
/// pattern is reproducible. All kernels that reduce over rows go through
/// this one function, which is why e.g. `syrk_lower` agrees bitwise with
/// the matching `gemm_t` entries.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    let quads = n / 4;
    let mut acc = [0.0f64; 4];
    for q in 0..quads {
        let b = 4 * q;
        acc[0] += x[b] * y[b];
        acc[1] += x[b + 1] * y[b + 1];
        acc[2] += x[b + 2] * y[b + 2];
        acc[3] += x[b + 3] * y[b + 3];
    }
    let mut tail = 0.0;
    for i in 4 * quads..n {
        tail += x[i] * y[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x` over equal-length slices.
#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dim_mismatch(op: &'static str, detail: String) -> KernelError {
    KernelError::DimensionMismatch { op, detail }
}

/// Cholesky factorization `M = L L^T` of a symmetric positive definite
/// matrix, lower triangle in, lower factor out.
///
/// Blocked right-looking schedule with panel width [`BLOCK`]. A pivot is
/// rejected when it is not strictly above `2^-52 * max(diag(M))`; the error
/// carries the pivot index. NaN pivots fail the same check.
pub fn cholesky_lower(
    m: &SymmetricMatrix,
    flops: &mut FlopCounter,
) -> Result<LowerTriangular, KernelError> {
    let n = m.dim();
    flops.record("potrf", count::potrf(n));

    let mut max_diag = f64::NEG_INFINITY;
    for i in 0..n {
        max_diag = max_diag.max(m.get(i, i));
    }
    let tol = f64::EPSILON * max_diag;

    let mut a = m.raw().to_vec();
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + BLOCK).min(n);

        // Factor the panel: columns k0..k1, rows from the diagonal down.
        for j in k0..k1 {
            let (head, tail) = a.split_at_mut(j * n);
            let colj = &mut tail[j..n];
            for t in k0..j {
                let lt = &head[t * n + j..t * n + n];
                axpy(-lt[0], lt, colj);
            }
            let pivot = colj[0];
            if !(pivot > tol) {
                return Err(KernelError::NotSpd { pivot_index: j });
            }
            let d = pivot.sqrt();
            colj[0] = d;
            for e in &mut colj[1..] {
                *e /= d;
            }
        }

        // Rank-(k1 - k0) update of the trailing lower triangle.
        for j in k1..n {
            let (head, tail) = a.split_at_mut(k1 * n);
            let base = (j - k1) * n;
            let colj = &mut tail[base + j..base + n];
            for t in k0..k1 {
                let lt = &head[t * n + j..t * n + n];
                axpy(-lt[0], lt, colj);
            }
        }

        k0 = k1;
    }
    Ok(LowerTriangular::from_full(n, a))
}

/// In-place forward substitution on a raw column-major batch: solves
/// `L Z = B`, overwriting `data` (which holds `cols` columns of length
/// `l.dim()`). Does not record flops; the public wrappers and the batch
/// drivers account for the call at their own granularity.
pub(crate) fn tri_solve_forward_raw(l: &LowerTriangular, data: &mut [f64], cols: usize) {
    let n = l.dim();
    debug_assert_eq!(data.len(), n * cols);
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + BLOCK).min(n);
        for z in data.chunks_exact_mut(n) {
            // Diagonal block: column-oriented forward substitution.
            for t in k0..k1 {
                let lt = l.col_tail(t);
                let zt = z[t] / lt[0];
                z[t] = zt;
                axpy(-zt, &lt[1..k1 - t], &mut z[t + 1..k1]);
            }
            // Fold the finished block into the rows below it.
            for t in k0..k1 {
                let lt = l.col_tail(t);
                axpy(-z[t], &lt[k1 - t..], &mut z[k1..]);
            }
        }
        k0 = k1;
    }
}

/// Solves `L Z = B` for a batch of right-hand-side columns, returning `Z`.
///
/// Records as `trsm`, or `trsv` for a single column.
pub fn tri_solve_forward(
    l: &LowerTriangular,
    b: &DenseMatrix,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix, KernelError> {
    let mut z = b.clone();
    tri_solve_forward_in_place(l, &mut z, flops)?;
    Ok(z)
}

/// Solves `L Z = B` in place, overwriting `b` with `Z`.
pub fn tri_solve_forward_in_place(
    l: &LowerTriangular,
    b: &mut DenseMatrix,
    flops: &mut FlopCounter,
) -> Result<(), KernelError> {
    let n = l.dim();
    if b.rows() != n {
        return Err(dim_mismatch(
            "tri_solve_forward",
            format!("factor dim {} vs rhs rows {}", n, b.rows()),
        ));
    }
    let cols = b.cols();
    if cols == 1 {
        flops.record("trsv", count::trsv(n));
    } else {
        flops.record("trsm", count::trsm(n, cols));
    }
    tri_solve_forward_raw(l, b.as_mut_slice(), cols);
    Ok(())
}

/// Solves `L z = b` for a single vector.
pub fn tri_solve_forward_vec(
    l: &LowerTriangular,
    b: &[f64],
    flops: &mut FlopCounter,
) -> Result<Vec<f64>, KernelError> {
    let n = l.dim();
    if b.len() != n {
        return Err(dim_mismatch(
            "tri_solve_forward",
            format!("factor dim {} vs rhs len {}", n, b.len()),
        ));
    }
    flops.record("trsv", count::trsv(n));
    let mut z = b.to_vec();
    tri_solve_forward_raw(l, &mut z, 1);
    Ok(z)
}

/// Symmetric product `A^T A`, lower triangle only.
pub fn syrk_lower(a: &DenseMatrix, flops: &mut FlopCounter) -> SymmetricMatrix {
    let cols = a.cols();
    flops.record("syrk", count::syrk(a.rows(), cols));
    let mut s = SymmetricMatrix::new(cols);
    for j in 0..cols {
        let cj = a.col(j);
        for i in j..cols {
            s.set_lower(i, j, dot(a.col(i), cj));
        }
    }
    s
}

/// General product `A^T B`; the operands share their row count.
///
/// Records as `gemm`, degrading to `gemv` or `dot` when one or both
/// operands are single columns.
pub fn gemm_t(
    a: &DenseMatrix,
    b: &DenseMatrix,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix, KernelError> {
    if a.rows() != b.rows() {
        return Err(dim_mismatch(
            "gemm_t",
            format!("row counts {} vs {}", a.rows(), b.rows()),
        ));
    }
    let (ac, bc) = (a.cols(), b.cols());
    let name = match (ac > 1, bc > 1) {
        (true, true) => "gemm",
        (false, false) => "dot",
        _ => "gemv",
    };
    flops.record(name, count::gemm(a.rows(), ac, bc));
    let mut out = DenseMatrix::new(ac, bc);
    for j in 0..bc {
        let bj = b.col(j);
        let oj = out.col_mut(j);
        for (i, o) in oj.iter_mut().enumerate() {
            *o = dot(a.col(i), bj);
        }
    }
    Ok(out)
}

/// Matrix-vector product `A^T v`.
///
/// Records as `gemv`, or `dot` when `A` has a single column.
pub fn matvec_t(
    a: &DenseMatrix,
    v: &[f64],
    flops: &mut FlopCounter,
) -> Result<Vec<f64>, KernelError> {
    if a.rows() != v.len() {
        return Err(dim_mismatch(
            "matvec_t",
            format!("matrix rows {} vs vector len {}", a.rows(), v.len()),
        ));
    }
    let cols = a.cols();
    let name = if cols > 1 { "gemv" } else { "dot" };
    flops.record(name, count::gemv(a.rows(), cols));
    Ok((0..cols).map(|j| dot(a.col(j), v)).collect())
}

/// Solves the symmetric positive definite system `S x = rhs` for a small
/// `p x p` matrix (`p <= SMALL_SOLVE_LIMIT`) by unblocked Cholesky plus two
/// triangular substitutions. Records as `posv`.
pub fn solve_spd_small(
    s: &SymmetricMatrix,
    rhs: &[f64],
    flops: &mut FlopCounter,
) -> Result<Vec<f64>, KernelError> {
    let p = s.dim();
    if p > SMALL_SOLVE_LIMIT {
        return Err(KernelError::SmallSystemTooLarge {
            op: "solve_spd_small",
            dim: p,
            limit: SMALL_SOLVE_LIMIT,
        });
    }
    if rhs.len() != p {
        return Err(dim_mismatch(
            "solve_spd_small",
            format!("system dim {} vs rhs len {}", p, rhs.len()),
        ));
    }
    flops.record("posv", count::posv(p));

    let mut max_diag = f64::NEG_INFINITY;
    for i in 0..p {
        max_diag = max_diag.max(s.get(i, i));
    }
    let tol = f64::EPSILON * max_diag;

    // Unblocked lower Cholesky on a local copy of the lower triangle.
    let mut l = vec![0.0f64; p * p];
    for j in 0..p {
        for i in j..p {
            l[i + j * p] = s.get(i, j);
        }
    }
    for j in 0..p {
        for t in 0..j {
            let ljt = l[j + t * p];
            for i in j..p {
                l[i + j * p] -= l[i + t * p] * ljt;
            }
        }
        let pivot = l[j + j * p];
        if !(pivot > tol) {
            return Err(KernelError::NotSpd { pivot_index: j });
        }
        let d = pivot.sqrt();
        l[j + j * p] = d;
        for i in j + 1..p {
            l[i + j * p] /= d;
        }
    }

    // Forward then backward substitution.
    let mut x = rhs.to_vec();
    for t in 0..p {
        x[t] /= l[t + t * p];
        let xt = x[t];
        for i in t + 1..p {
            x[i] -= l[i + t * p] * xt;
        }
    }
    for t in (0..p).rev() {
        let mut s_acc = x[t];
        for i in t + 1..p {
            s_acc -= l[i + t * p] * x[i];
        }
        x[t] = s_acc / l[t + t * p];
    }
    Ok(x)
}

/// Solves the general system `S x = rhs` for a small `p x p` matrix by LU
/// with partial pivoting. Records as `gesv`. This is the fallback for
/// systems whose symmetry cannot be guaranteed bit-for-bit.
pub fn solve_general_small(
    s: &DenseMatrix,
    rhs: &[f64],
    flops: &mut FlopCounter,
) -> Result<Vec<f64>, KernelError> {
    let p = s.rows();
    if s.cols() != p {
        return Err(dim_mismatch(
            "solve_general_small",
            format!("matrix is {}x{}, expected square", s.rows(), s.cols()),
        ));
    }
    if p > SMALL_SOLVE_LIMIT {
        return Err(KernelError::SmallSystemTooLarge {
            op: "solve_general_small",
            dim: p,
            limit: SMALL_SOLVE_LIMIT,
        });
    }
    if rhs.len() != p {
        return Err(dim_mismatch(
            "solve_general_small",
            format!("system dim {} vs rhs len {}", p, rhs.len()),
        ));
    }
    flops.record("gesv", count::gesv(p));

    let mut lu = s.as_slice().to_vec();
    let mut x = rhs.to_vec();
    let tol = lu_pivot_tolerance(&lu);
    for k in 0..p {
        let r = pivot_row(&lu, p, k);
        if r != k {
            for j in 0..p {
                lu.swap(k + j * p, r + j * p);
            }
            x.swap(k, r);
        }
        let pivot = lu[k + k * p];
        if !(pivot.abs() > tol) {
            return Err(KernelError::Singular { pivot_index: k });
        }
        for i in k + 1..p {
            lu[i + k * p] /= pivot;
        }
        for j in k + 1..p {
            let ukj = lu[k + j * p];
            for i in k + 1..p {
                lu[i + j * p] -= lu[i + k * p] * ukj;
            }
        }
    }
    lu_substitute(&lu, p, &mut x);
    Ok(x)
}

/// Explicit inverse of a general square matrix via LU with partial
/// pivoting followed by a solve per unit vector. Records as `getri`.
pub fn invert_general(
    m: &DenseMatrix,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix, KernelError> {
    let n = m.rows();
    if m.cols() != n {
        return Err(dim_mismatch(
            "invert_general",
            format!("matrix is {}x{}, expected square", m.rows(), m.cols()),
        ));
    }
    flops.record("getri", count::getri(n));

    let mut lu = m.as_slice().to_vec();
    let tol = lu_pivot_tolerance(&lu);
    let mut perm = Vec::with_capacity(n);
    for k in 0..n {
        let r = pivot_row(&lu, n, k);
        perm.push(r);
        if r != k {
            for j in 0..n {
                lu.swap(k + j * n, r + j * n);
            }
        }
        let pivot = lu[k + k * n];
        if !(pivot.abs() > tol) {
            return Err(KernelError::Singular { pivot_index: k });
        }
        let (left, right) = lu.split_at_mut((k + 1) * n);
        for v in &mut left[k * n + k + 1..k * n + n] {
            *v /= pivot;
        }
        let lcol = &left[k * n + k + 1..k * n + n];
        for colj in right.chunks_exact_mut(n) {
            let ukj = colj[k];
            axpy(-ukj, lcol, &mut colj[k + 1..]);
        }
    }

    let mut inv = DenseMatrix::new(n, n);
    let mut b = vec![0.0f64; n];
    for e in 0..n {
        b.iter_mut().for_each(|v| *v = 0.0);
        b[e] = 1.0;
        for (k, &r) in perm.iter().enumerate() {
            b.swap(k, r);
        }
        lu_substitute(&lu, n, &mut b);
        inv.col_mut(e).copy_from_slice(&b);
    }
    Ok(inv)
}

/// Pivot tolerance for LU: scaled by the largest input magnitude.
fn lu_pivot_tolerance(data: &[f64]) -> f64 {
    let max_abs = data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    f64::EPSILON * max_abs
}

/// Row with the largest magnitude in column `k`, rows `k..`. Ties resolve
/// to the first occurrence so the pivot choice is deterministic.
fn pivot_row(lu: &[f64], n: usize, k: usize) -> usize {
    let col = &lu[k * n..(k + 1) * n];
    let mut best = k;
    let mut best_abs = col[k].abs();
    for (i, &v) in col.iter().enumerate().skip(k + 1) {
        if v.abs() > best_abs {
            best = i;
            best_abs = v.abs();
        }
    }
    best
}

/// Applies the unit-lower then upper substitution of a packed LU to `b`.
fn lu_substitute(lu: &[f64], n: usize, b: &mut [f64]) {
    for t in 0..n {
        let (head, tail) = b.split_at_mut(t + 1);
        axpy(-head[t], &lu[t * n + t + 1..t * n + n], tail);
    }
    for t in (0..n).rev() {
        let v = b[t] / lu[t + t * n];
        b[t] = v;
        axpy(-v, &lu[t * n..t * n + t], &mut b[..t]);
    }
}
