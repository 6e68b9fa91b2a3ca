//! Seeded dataset synthesis.
//!
//! One u64 seed determines every byte of the three files, on any platform:
//! the stream cipher RNG is platform-independent, the uniform mapping uses
//! only exact dyadic arithmetic, and the draw order is fixed (covariance
//! factor, then X_L, then y, then the panels in sequence order). Panels are
//! drawn and flushed in bounded chunks so generation stays cheap in memory
//! even when the panel stream dwarfs RAM; chunking cannot change the bytes
//! because the draws are consumed strictly in order.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::kernels::{syrk_lower, DenseMatrix, FlopCounter, SymmetricMatrix};
use crate::solvers::ProblemDims;

use super::files::{write_static, BlockWriter, DatasetPaths, XrWriter};
use super::format::DatasetHeader;
use super::StorageError;

/// Panel floats drawn per flush while streaming the X_R file.
const PANEL_CHUNK_FLOATS: usize = 1 << 19;

/// One draw, uniform on [-1, 1): the top 53 bits of a u64 scaled by 2^-52.
/// Every representable output is a multiple of 2^-52, so the mapping is
/// exact and identical on every platform.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64) / (1u64 << 52) as f64 - 1.0
}

fn fill(rng: &mut ChaCha8Rng, dest: &mut [f64]) {
    for v in dest {
        *v = uniform(rng);
    }
}

/// Builds the shared covariance: M = A A^T + c*n*I for a uniform random A.
/// The Gram term makes M symmetric positive semidefinite; the diagonal shift
/// `conditioning * n` keeps the spectrum away from zero. With the entries
/// uniform on [-1, 1), E[A A^T] is about n/3 on the diagonal, so c = 1 gives
/// a condition number of a few (units, not thousands) for any n.
fn synth_covariance(rng: &mut ChaCha8Rng, n: usize, conditioning: f64) -> SymmetricMatrix {
    let mut a = vec![0.0; n * n];
    fill(rng, &mut a);
    let a = DenseMatrix::from_column_major(n, n, a);
    // syrk forms B^T B; feeding A^T yields A A^T. Synthesis work is not part
    // of any solve, so the counter is scratch.
    let mut scratch = FlopCounter::default();
    let mut m = syrk_lower(&a.transpose(), &mut scratch);
    let shift = conditioning * n as f64;
    for i in 0..n {
        m.set_lower(i, i, m.get(i, i) + shift);
    }
    m
}

/// Writes a full dataset under `dir`: static inputs, the panel stream, and
/// an output-file skeleton whose outputs-valid flag is clear.
///
/// Requires `conditioning > 0`; the default everywhere else is 1.
pub fn generate_dataset(
    dir: &Path,
    dims: &ProblemDims,
    seed: u64,
    conditioning: f64,
) -> Result<DatasetPaths, StorageError> {
    dims.validate()
        .map_err(|e| StorageError::DimMismatch(e.to_string()))?;
    if !conditioning.is_finite() || conditioning <= 0.0 {
        return Err(StorageError::InvalidArgument(format!(
            "conditioning must be positive, got {conditioning}"
        )));
    }
    let paths = DatasetPaths::in_dir(dir);
    let header = DatasetHeader::new(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cov = synth_covariance(&mut rng, dims.n, conditioning);
    let mut xl = vec![0.0; dims.n * dims.l];
    fill(&mut rng, &mut xl);
    let xl = DenseMatrix::from_column_major(dims.n, dims.l, xl);
    let mut y = vec![0.0; dims.n];
    fill(&mut rng, &mut y);
    write_static(&paths.static_file, &header, &cov, &xl, &y)?;

    let mut w = XrWriter::create(&paths.xr_file, &header)?;
    let per_panel = dims.n * dims.r;
    let chunk_panels = (PANEL_CHUNK_FLOATS / per_panel).max(1);
    let mut buf = vec![0.0; chunk_panels * per_panel];
    let mut remaining = dims.m;
    while remaining > 0 {
        let take = remaining.min(chunk_panels);
        buf.truncate(take * per_panel);
        fill(&mut rng, &mut buf);
        w.append_panels(&buf)?;
        remaining -= take;
    }
    w.finish()?;

    // Output skeleton: correct size and header, flag clear, all-zero records.
    drop(BlockWriter::create(&paths.b_file, &header)?);
    Ok(paths)
}
