//! Out-of-core execution: block scheduling, the background transfer agent,
//! and the synchronous / double-buffered orchestrators.
//!
//! The shared inputs (covariance, left design, response) stay resident; the
//! panel stream is read block by block and the output records are written
//! back as they are produced, so memory use is bounded by two workspaces
//! regardless of how long the stream is. The double-buffered mode overlaps
//! the next block's read and the previous block's write with the current
//! block's compute; the [`OverlapReport`] says how well that worked.

pub mod agent;
pub mod run;
pub mod schedule;

pub use agent::{IoPolicy, Ticket, TransferAgent};
pub use run::{run_ooc_async, run_ooc_sync, BlockTiming, OocRun, OverlapReport};
pub use schedule::{
    default_warmup, plan_blocks, select_block_size, BlockChoice, BlockSchedule, DEFAULT_WARMUP,
};

use crate::solvers::SolverError;
use crate::storage::StorageError;

/// Errors that abort an out-of-core run.
#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("invalid block size: {0}")]
    InvalidBlockSize(String),

    #[error(
        "memory limit {limit} bytes cannot hold even one panel per workspace (needs {needed})"
    )]
    InsufficientMemory { needed: u64, limit: u64 },

    #[error("transfer for block {block} failed: {source}")]
    IoFailed { block: usize, source: StorageError },

    #[error("block {block} needs {needed} panels but the workspace holds {capacity}")]
    WorkspaceOverrun {
        block: usize,
        needed: usize,
        capacity: usize,
    },

    #[error(transparent)]
    Storage(#[from] StorageError),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("transfer agent failure: {0}")]
    Agent(String),
}
