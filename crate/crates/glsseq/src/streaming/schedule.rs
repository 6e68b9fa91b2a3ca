//! Block scheduling: how the panel stream is cut into workspace-sized runs.
//!
//! A schedule is a contiguous, ordered cover of the m problems. The first
//! block may be a short warmup: the initial read is always fully exposed
//! (nothing can overlap it), so starting small caps that exposure before
//! the steady-state block size takes over.

use crate::solvers::ProblemDims;

use super::StreamError;

/// Warmup panels in the first block when the caller does not choose:
/// `min(k, 256)`.
pub const DEFAULT_WARMUP: usize = 256;

/// Default warmup for steady-state block size `k`.
pub fn default_warmup(k: usize) -> usize {
    k.min(DEFAULT_WARMUP)
}

/// An ordered, contiguous partition of `[0, m)` into blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSchedule {
    block_size: usize,
    warmup_size: usize,
    boundaries: Vec<(usize, usize)>,
}

impl BlockSchedule {
    /// Steady-state panels per block.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn warmup_size(&self) -> usize {
        self.warmup_size
    }

    /// `(first_index, count)` per block, in stream order.
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.boundaries
    }

    pub fn num_blocks(&self) -> usize {
        self.boundaries.len()
    }

    /// Largest block count; sizes the workspaces.
    pub fn max_block(&self) -> usize {
        self.boundaries.iter().map(|&(_, c)| c).max().unwrap_or(0)
    }
}

/// Bytes of shared state held for the whole run regardless of block size:
/// the covariance and its factor (n^2 each), the whitened left design, and
/// the whitened response.
pub fn fixed_bytes(dims: &ProblemDims) -> u64 {
    8 * (2 * dims.n as u64 * dims.n as u64 + (dims.n * dims.l) as u64 + dims.n as u64)
}

/// Streamed bytes one problem occupies in a workspace: its panel plus its
/// output record.
pub fn per_problem_bytes(dims: &ProblemDims) -> u64 {
    (8 * dims.n * dims.r) as u64 + (8 + 8 * dims.p()) as u64
}

/// Largest block size whose two workspaces fit under `mem_limit`, charging
/// the fixed state against each half of the budget (conservative: the
/// shared state is counted twice).
fn memory_limited_k(mem_limit: u64, dims: &ProblemDims) -> Result<usize, StreamError> {
    let half = mem_limit / 2;
    let fixed = fixed_bytes(dims);
    let per = per_problem_bytes(dims);
    let k = half.saturating_sub(fixed) / per;
    if k == 0 {
        return Err(StreamError::InsufficientMemory {
            needed: 2 * (fixed + per),
            limit: mem_limit,
        });
    }
    Ok(k as usize)
}

/// Cuts `[0, m)` into a warmup block (when `warmup > 0`) followed by blocks
/// of `k` panels. When `mem_limit` is given, `k` must fit two workspaces
/// under it.
pub fn plan_blocks(
    dims: &ProblemDims,
    k: usize,
    warmup: usize,
    mem_limit: Option<u64>,
) -> Result<BlockSchedule, StreamError> {
    if k < 1 {
        return Err(StreamError::InvalidBlockSize(
            "block size must be at least 1".into(),
        ));
    }
    if warmup > k {
        return Err(StreamError::InvalidBlockSize(format!(
            "warmup {warmup} exceeds block size {k}"
        )));
    }
    if let Some(limit) = mem_limit {
        let cap = memory_limited_k(limit, dims)?;
        if k > cap {
            return Err(StreamError::InvalidBlockSize(format!(
                "block size {k} needs more than the {limit}-byte memory limit \
                 (at most {cap} panels fit)"
            )));
        }
    }
    let m = dims.m;
    let mut boundaries = Vec::new();
    let mut cursor = 0;
    if warmup > 0 {
        let take = warmup.min(m);
        boundaries.push((0, take));
        cursor = take;
    }
    while cursor < m {
        let take = k.min(m - cursor);
        boundaries.push((cursor, take));
        cursor += take;
    }
    Ok(BlockSchedule {
        block_size: k,
        warmup_size: warmup,
        boundaries,
    })
}

/// A block-size choice plus whether the run is expected to be I/O-bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockChoice {
    pub block_size: usize,
    /// True when no block size makes per-block compute exceed per-block
    /// load+store by the 10% margin.
    pub io_bound: bool,
}

/// Picks the largest block size whose two workspaces fit under `mem_limit`,
/// and reports whether that size overlaps I/O with the required margin.
///
/// Under the rate model both sides of the margin test scale linearly in k
/// (compute `k / compute_rate`, transfer `k * bytes / io_rate`), so the
/// test's outcome is the same for every k: growing the block cannot rescue
/// an I/O-bound configuration, it only amortizes per-request latency, which
/// this model does not charge. The memory-limited k is therefore optimal
/// whenever any k works, and the flag carries the rest of the answer.
pub fn select_block_size(
    mem_limit: u64,
    dims: &ProblemDims,
    compute_rate: f64,
    io_rate: f64,
) -> Result<BlockChoice, StreamError> {
    assert!(
        compute_rate > 0.0 && io_rate > 0.0,
        "rates must be positive"
    );
    let block_size = memory_limited_k(mem_limit, dims)?;
    let compute_per_problem = 1.0 / compute_rate;
    let transfer_per_problem = per_problem_bytes(dims) as f64 / io_rate;
    let io_bound = compute_per_problem < 1.1 * transfer_per_problem;
    Ok(BlockChoice {
        block_size,
        io_bound,
    })
}
