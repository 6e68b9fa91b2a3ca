//! Column-major matrix containers.
//!
//! Everything in the crate, including the on-disk formats, uses column-major
//! layout, so a column is always one contiguous slice.

/// Dense `rows x cols` matrix in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Zero matrix of the given shape.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Wraps an existing column-major buffer.
    ///
    /// Panics if the buffer length does not match the shape; that is a
    /// programming error, not an input error.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::new(n, n);
        for i in 0..n {
            out.set(i, i, 1.0);
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row + col * self.rows]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row + col * self.rows] = value;
    }

    /// One contiguous column.
    #[inline]
    pub fn col(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    /// Contiguous slice covering columns `first..first + count`.
    pub fn cols_slice(&self, first: usize, count: usize) -> &[f64] {
        &self.data[first * self.rows..(first + count) * self.rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::new(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

/// Lower-triangular `dim x dim` factor.
///
/// Backed by a full column-major buffer whose strictly upper part is
/// unspecified; accessors never expose it.
#[derive(Debug, Clone)]
pub struct LowerTriangular {
    dim: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    /// Wraps a full column-major buffer whose lower triangle holds the
    /// factor. Entries above the diagonal are ignored from here on.
    pub(crate) fn from_full(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(row, col)`; zero above the diagonal.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.dim && col < self.dim);
        if row >= col {
            self.data[row + col * self.dim]
        } else {
            0.0
        }
    }

    /// Column `col` from the diagonal down: entries `(col.., col)`.
    #[inline]
    pub fn col_tail(&self, col: usize) -> &[f64] {
        &self.data[col * self.dim + col..(col + 1) * self.dim]
    }

    /// Materializes the factor with explicit zeros above the diagonal.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::new(self.dim, self.dim);
        for c in 0..self.dim {
            for r in c..self.dim {
                out.set(r, c, self.data[r + c * self.dim]);
            }
        }
        out
    }
}

/// Symmetric `dim x dim` matrix.
///
/// Backed by a full column-major buffer; the lower triangle is
/// authoritative and reads of the upper triangle mirror it. Kernels only
/// ever touch the lower triangle.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    /// Wraps a full column-major buffer. Only the lower triangle is read.
    pub fn from_column_major(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    /// Takes the lower triangle of a square dense matrix.
    pub fn from_dense_lower(m: &DenseMatrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "symmetric source must be square");
        Self {
            dim: m.rows(),
            data: m.as_slice().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(row, col)`, mirroring the lower triangle.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.dim && col < self.dim);
        if row >= col {
            self.data[row + col * self.dim]
        } else {
            self.data[col + row * self.dim]
        }
    }

    /// Writes an entry of the lower triangle (`row >= col`).
    #[inline]
    pub fn set_lower(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row >= col && row < self.dim);
        self.data[row + col * self.dim] = value;
    }

    /// Raw backing buffer; callers must only rely on the lower triangle.
    pub(crate) fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Materializes a dense matrix with the upper triangle mirrored from
    /// the lower, so both halves agree bitwise.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::new(self.dim, self.dim);
        for c in 0..self.dim {
            for r in c..self.dim {
                let v = self.data[r + c * self.dim];
                out.set(r, c, v);
                out.set(c, r, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_is_column_major() {
        let m = DenseMatrix::from_column_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 2), 6.0);
        assert_eq!(m.col(1), &[3.0, 4.0]);
        assert_eq!(m.cols_slice(1, 2), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn transpose_round_trips() {
        let m = DenseMatrix::from_column_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = m.transpose();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.cols(), 2);
        assert_eq!(t.get(2, 1), m.get(1, 2));
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn symmetric_mirrors_lower_triangle() {
        let mut s = SymmetricMatrix::new(3);
        s.set_lower(1, 0, 7.0);
        s.set_lower(2, 1, -2.0);
        assert_eq!(s.get(0, 1), 7.0);
        assert_eq!(s.get(1, 2), -2.0);
        let d = s.to_dense();
        assert_eq!(d.get(0, 1), d.get(1, 0));
        assert_eq!(d.get(1, 2), d.get(2, 1));
    }

    #[test]
    fn symmetric_upper_buffer_junk_is_ignored() {
        // from_column_major takes a full buffer but only the lower triangle
        // is meaningful; get() must never read the upper half.
        let data = vec![
            1.0, 2.0, 3.0, // col 0
            99.0, 4.0, 5.0, // col 1 (99 sits above the diagonal)
            98.0, 97.0, 6.0, // col 2
        ];
        let s = SymmetricMatrix::from_column_major(3, data);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(0, 2), 3.0);
        assert_eq!(s.get(1, 2), 5.0);
    }

    #[test]
    fn lower_triangular_masks_upper_entries() {
        let l = LowerTriangular::from_full(2, vec![2.0, 1.0, 55.0, 3.0]);
        assert_eq!(l.get(0, 1), 0.0);
        assert_eq!(l.get(1, 0), 1.0);
        assert_eq!(l.col_tail(0), &[2.0, 1.0]);
        assert_eq!(l.col_tail(1), &[3.0]);
        let d = l.to_dense();
        assert_eq!(d.get(0, 1), 0.0);
    }
}
