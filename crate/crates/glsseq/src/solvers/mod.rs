//! The solver ladder.
//!
//! Four algorithms compute the same per-problem coefficients
//! `b_i = (X_i^T M^-1 X_i)^-1 X_i^T M^-1 y` for a sequence of problems that
//! share the covariance `M`, the left design block `X_L` and the
//! observations `y`, differing only in the per-problem panel `X_Ri`:
//!
//! * `blackbox`: refactors `M` for every problem. The reference point.
//! * `seqgls`: factors `M` and whitens `y` once, then loops.
//! * `hpgwas`: additionally whitens `X_L` once, reuses its normal-equation
//!   blocks, and whitens the panel stream in grouped multi-column solves.
//! * `gwfgls`: the explicit-inverse baseline, kept deliberately wasteful.
//!
//! All solvers record analytic flops into a caller-supplied
//! [`FlopCounter`](crate::kernels::FlopCounter) and isolate per-problem
//! rank deficiency: a failed problem yields a `RankDeficient` record with
//! NaN sentinel coefficients and its neighbors are untouched.

mod cost;
mod engine;
mod gwfgls;
mod oracle;
mod simple;

pub use cost::{predicted_flops, predicted_flops_dims, Algorithm, CostModel};
pub use engine::{assemble_problem, solve_sequence_hpgwas, HpGwasEngine, SharedDesign};
pub use gwfgls::solve_sequence_gwfgls;
pub use oracle::solve_explicit_inverse;
pub use simple::{
    solve_sequence_blackbox, solve_sequence_seqgls, solve_single_blackbox, SeqGlsContext,
};

use crate::kernels::KernelError;
use crate::storage::NAN_SENTINEL_BITS;

/// Default upper bound on predictors per problem.
pub const MAX_PREDICTORS: usize = 20;

/// Dimensions of a problem sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    /// Observations per problem.
    pub n: usize,
    /// Columns of the shared left design block.
    pub l: usize,
    /// Columns of each per-problem panel.
    pub r: usize,
    /// Number of problems in the sequence.
    pub m: usize,
}

impl ProblemDims {
    pub fn new(n: usize, l: usize, r: usize, m: usize) -> Self {
        Self { n, l, r, m }
    }

    /// Total predictors per problem.
    pub fn p(&self) -> usize {
        self.l + self.r
    }

    /// Checks the structural invariants with the default predictor cap.
    pub fn validate(&self) -> Result<(), SolverError> {
        self.validate_with_cap(MAX_PREDICTORS)
    }

    /// Checks `n > p >= 1`, `r >= 1`, `m >= 1` and `p <= cap`.
    pub fn validate_with_cap(&self, cap: usize) -> Result<(), SolverError> {
        let p = self.p();
        if self.r < 1 {
            return Err(SolverError::InvalidDims(
                "panel width r must be at least 1".into(),
            ));
        }
        if p < 1 || self.n <= p {
            return Err(SolverError::InvalidDims(format!(
                "need n > p >= 1, got n = {}, p = {p}",
                self.n
            )));
        }
        if p > cap {
            return Err(SolverError::InvalidDims(format!(
                "p = {p} exceeds the predictor cap {cap}"
            )));
        }
        if self.m < 1 {
            return Err(SolverError::InvalidDims(
                "sequence must contain at least one problem".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Ok,
    /// The per-problem normal equations were not positive definite, i.e.
    /// the problem's design columns are (numerically) linearly dependent.
    RankDeficient,
}

/// Coefficients for one problem, tagged with its sequence index.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRecord {
    pub index: usize,
    pub status: SolveStatus,
    /// Length p. All entries are the quiet-NaN sentinel when the status is
    /// `RankDeficient`.
    pub b: Vec<f64>,
}

impl SolutionRecord {
    pub fn ok(index: usize, b: Vec<f64>) -> Self {
        debug_assert!(b.iter().all(|v| v.is_finite()));
        Self {
            index,
            status: SolveStatus::Ok,
            b,
        }
    }

    pub fn rank_deficient(index: usize, p: usize) -> Self {
        Self {
            index,
            status: SolveStatus::RankDeficient,
            b: vec![f64::from_bits(NAN_SENTINEL_BITS); p],
        }
    }

    /// Bit pattern every coefficient of a failed record carries.
    pub fn sentinel() -> f64 {
        f64::from_bits(NAN_SENTINEL_BITS)
    }
}

/// A contiguous run of panels from the X_R stream.
///
/// Panel `i` (relative to the block) occupies columns `[i*r, (i+1)*r)` of
/// `panels`.
#[derive(Debug, Clone)]
pub struct XrBlock {
    first_index: usize,
    count: usize,
    panels: crate::kernels::DenseMatrix,
}

impl XrBlock {
    /// Panics if `panels` does not split evenly into `count` panels; the
    /// caller controls both and a mismatch is a programming error.
    pub fn new(first_index: usize, count: usize, panels: crate::kernels::DenseMatrix) -> Self {
        assert!(count >= 1, "a block holds at least one panel");
        assert_eq!(
            panels.cols() % count,
            0,
            "{} columns do not split into {count} panels",
            panels.cols()
        );
        Self {
            first_index,
            count,
            panels,
        }
    }

    pub fn first_index(&self) -> usize {
        self.first_index
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Panel width r.
    pub fn panel_width(&self) -> usize {
        self.panels.cols() / self.count
    }

    pub fn panels(&self) -> &crate::kernels::DenseMatrix {
        &self.panels
    }

    pub fn panels_mut(&mut self) -> &mut crate::kernels::DenseMatrix {
        &mut self.panels
    }

    /// Columns of panel `i` (block-relative) as one contiguous slice.
    pub fn panel(&self, i: usize) -> &[f64] {
        let r = self.panel_width();
        self.panels.cols_slice(i * r, r)
    }

    /// Consumes the block, handing back the panel storage for reuse.
    pub fn into_panels(self) -> crate::kernels::DenseMatrix {
        self.panels
    }
}

/// Errors that abort a whole sequence. Per-problem failures do not appear
/// here; they are carried in [`SolutionRecord::status`].
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("covariance matrix is not positive definite (pivot {pivot_index})")]
    CovarianceNotSpd { pivot_index: usize },

    #[error("covariance matrix is singular (pivot {pivot_index})")]
    CovarianceSingular { pivot_index: usize },

    #[error("invalid problem dimensions: {0}")]
    InvalidDims(String),

    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),

    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Maps a covariance factorization failure to the sequence-level error.
pub(crate) fn covariance_error(err: KernelError) -> SolverError {
    match err {
        KernelError::NotSpd { pivot_index } => SolverError::CovarianceNotSpd { pivot_index },
        KernelError::Singular { pivot_index } => SolverError::CovarianceSingular { pivot_index },
        other => SolverError::Kernel(other),
    }
}
