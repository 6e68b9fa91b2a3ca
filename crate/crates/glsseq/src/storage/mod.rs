//! Binary dataset files and the seeded generator.
//!
//! A dataset is three files sharing one header format: the static inputs
//! (covariance, left design, response), the panel stream, and the output
//! records. Layouts are fixed little-endian byte tables (see [`format`]),
//! so a dataset written on one machine reads bit-identically on another,
//! and the generator reproduces every byte from a single u64 seed.

pub mod csv;
pub mod files;
pub mod format;
pub mod synth;

pub use csv::{dump_records_csv, CSV_DUMP_LIMIT};
pub use files::{
    read_static, write_static, BlockReader, BlockWriter, DatasetPaths, StaticData, XrReader,
    XrWriter, B_FILE_NAME, STATIC_FILE_NAME, XR_FILE_NAME,
};
pub use format::{DatasetHeader, FLAG_OUTPUTS_VALID, HEADER_LEN, MAGIC};
pub use synth::generate_dataset;

/// Bit pattern written for every coefficient of a rank-deficient record:
/// a quiet NaN with an empty payload. Comparing bits, not values, keeps
/// sentinel checks exact (NaN never equals itself as a float).
pub const NAN_SENTINEL_BITS: u64 = 0x7ff8_0000_0000_0000;

/// Anything that can go wrong reading, writing, or synthesizing datasets.
#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("{path}: not a dataset file (bad magic)")]
    BadMagic { path: String },

    #[error("{path}: file ends inside {section}")]
    TruncatedFile { path: String, section: String },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("range [{first}, {first_plus_count}) outside the {m} stored problems", first_plus_count = first + count)]
    OutOfRange {
        first: usize,
        count: usize,
        m: usize,
    },

    #[error("cannot finalize: {missing}")]
    Incomplete { missing: String },

    #[error("record {index} has unknown status word {value}")]
    BadStatus { index: usize, value: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}
