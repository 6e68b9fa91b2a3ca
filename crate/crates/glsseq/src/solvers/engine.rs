//! The shared-design engine: everything reusable is computed once, and the
//! panel stream is consumed block by block.
//!
//! Setup factors the covariance, whitens `X_L` and `y`, and freezes the
//! normal-equation pieces they contribute: `S_TL = X_L^T X_L` and
//! `b_T = X_L^T y` (whitened quantities throughout). Per panel, only the
//! thin borders involving `X_Ri` remain: an `r x l` strip, an `r x r`
//! corner, an `r`-vector, and one small solve.
//!
//! Work runs in two phases per block, mirroring how the whole design
//! stays bitwise deterministic:
//!
//! * Phase 1 whitens the block's panels with one grouped multi-column
//!   triangular solve, parallel over disjoint column chunks. Triangular
//!   solves are column-separable, so the chunking never changes bits.
//! * Phase 2 solves the block's problems in parallel, one task per
//!   problem, each touching only its own panel columns and its own output
//!   record.

use rayon::prelude::*;

use crate::kernels::{
    cholesky_lower, cost, gemm_t, matvec_t, solve_spd_small, syrk_lower, tri_solve_forward,
    tri_solve_forward_raw, tri_solve_forward_vec, DenseMatrix, FlopCounter, KernelError,
    LowerTriangular, SymmetricMatrix,
};

use super::{covariance_error, SolutionRecord, SolverError, XrBlock};

/// Column chunk width for the parallel block whiten.
const WHITEN_CHUNK_COLS: usize = 64;

/// The quantities shared by every problem, fixed after setup.
#[derive(Debug, Clone)]
pub struct SharedDesign {
    /// Whitened left design block, n x l.
    xl: DenseMatrix,
    /// Whitened observations, length n.
    y: Vec<f64>,
    /// `X_L^T X_L` of the whitened block, l x l.
    s_tl: SymmetricMatrix,
    /// `X_L^T y` of the whitened quantities, length l.
    b_t: Vec<f64>,
}

impl SharedDesign {
    pub fn whitened_xl(&self) -> &DenseMatrix {
        &self.xl
    }

    pub fn whitened_y(&self) -> &[f64] {
        &self.y
    }

    pub fn s_tl(&self) -> &SymmetricMatrix {
        &self.s_tl
    }

    pub fn b_t(&self) -> &[f64] {
        &self.b_t
    }
}

/// Builds the p x p normal equations of one problem from the frozen left
/// pieces plus one whitened panel, and solves them.
///
/// Inputs must all be whitened already. The returned record has index 0;
/// sequence drivers overwrite it with the problem's position. A failed
/// small solve yields a `RankDeficient` record, never an error: one
/// degenerate panel must not poison a long scan.
pub fn assemble_problem(
    s_tl: &SymmetricMatrix,
    b_t: &[f64],
    xl_w: &DenseMatrix,
    xr_panel: &DenseMatrix,
    y_w: &[f64],
    flops: &mut FlopCounter,
) -> SolutionRecord {
    let l = s_tl.dim();
    let r = xr_panel.cols();
    let p = l + r;
    debug_assert_eq!(xl_w.cols(), l);
    debug_assert_eq!(b_t.len(), l);
    debug_assert_eq!(xr_panel.rows(), y_w.len());

    let mut s = SymmetricMatrix::new(p);
    for j in 0..l {
        for i in j..l {
            s.set_lower(i, j, s_tl.get(i, j));
        }
    }
    if l > 0 {
        let s_bl = gemm_t(xr_panel, xl_w, flops).expect("panel and X_L share rows");
        for j in 0..l {
            for i in 0..r {
                s.set_lower(l + i, j, s_bl.get(i, j));
            }
        }
    }
    let s_br = syrk_lower(xr_panel, flops);
    for j in 0..r {
        for i in j..r {
            s.set_lower(l + i, l + j, s_br.get(i, j));
        }
    }

    let mut rhs = Vec::with_capacity(p);
    rhs.extend_from_slice(b_t);
    let b_b = matvec_t(xr_panel, y_w, flops).expect("panel rows match observations");
    rhs.extend_from_slice(&b_b);

    match solve_spd_small(&s, &rhs, flops) {
        Ok(b) => SolutionRecord::ok(0, b),
        Err(KernelError::NotSpd { .. }) => SolutionRecord::rank_deficient(0, p),
        Err(e) => unreachable!("small solve dims are validated upstream: {e}"),
    }
}

/// Reusable solver for the panel stream. Owns the worker pool for its
/// lifetime; constructing one per block would pay thread spawn costs per
/// block and is exactly what this type exists to avoid.
pub struct HpGwasEngine {
    chol: LowerTriangular,
    design: SharedDesign,
    pool: rayon::ThreadPool,
    workers: usize,
}

impl HpGwasEngine {
    /// Runs the once-per-sequence setup: factor, whiten `X_L` and `y`,
    /// and precompute their normal-equation contributions.
    pub fn new(
        cov: &SymmetricMatrix,
        xl: &DenseMatrix,
        y: &[f64],
        workers: usize,
        flops: &mut FlopCounter,
    ) -> Result<Self, SolverError> {
        let n = cov.dim();
        if xl.rows() != n || y.len() != n {
            return Err(SolverError::InvalidDims(format!(
                "covariance dim {n} vs X_L rows {} vs observations {}",
                xl.rows(),
                y.len()
            )));
        }
        if workers < 1 {
            return Err(SolverError::InvalidDims("workers must be >= 1".into()));
        }

        let chol = cholesky_lower(cov, flops).map_err(covariance_error)?;
        let l = xl.cols();
        let wxl = if l > 0 {
            tri_solve_forward(&chol, xl, flops)?
        } else {
            DenseMatrix::new(n, 0)
        };
        let wy = tri_solve_forward_vec(&chol, y, flops)?;
        let (s_tl, b_t) = if l > 0 {
            let s_tl = syrk_lower(&wxl, flops);
            let b_t = matvec_t(&wxl, &wy, flops)?;
            (s_tl, b_t)
        } else {
            (SymmetricMatrix::new(0), Vec::new())
        };

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SolverError::WorkerPool(e.to_string()))?;

        Ok(Self {
            chol,
            design: SharedDesign {
                xl: wxl,
                y: wy,
                s_tl,
                b_t,
            },
            pool,
            workers,
        })
    }

    pub fn n(&self) -> usize {
        self.chol.dim()
    }

    pub fn l(&self) -> usize {
        self.design.xl.cols()
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn shared(&self) -> &SharedDesign {
        &self.design
    }

    pub fn cholesky(&self) -> &LowerTriangular {
        &self.chol
    }

    /// Whitens a block's panels in place: one grouped multi-column
    /// triangular solve, recorded as a single call over all columns and
    /// executed in parallel over disjoint column chunks.
    pub fn whiten_block(&self, block: &mut XrBlock, flops: &mut FlopCounter) {
        let n = self.n();
        assert_eq!(block.panels().rows(), n, "block row count mismatch");
        let cols = block.panels().cols();
        let name = if cols == 1 { "trsv" } else { "trsm" };
        flops.record(name, cost::trsm(n, cols));

        let chol = &self.chol;
        let data = block.panels_mut().as_mut_slice();
        self.pool.install(|| {
            data.par_chunks_mut(n * WHITEN_CHUNK_COLS)
                .for_each(|chunk| tri_solve_forward_raw(chol, chunk, chunk.len() / n));
        });
    }

    /// Solves every problem of an already-whitened block, one parallel
    /// task per problem. Records come back in problem order and the
    /// per-task flop counters are merged in that same order.
    pub fn solve_block(&self, block: &XrBlock, flops: &mut FlopCounter) -> Vec<SolutionRecord> {
        let n = self.n();
        let r = block.panel_width();
        let design = &self.design;
        let results: Vec<(SolutionRecord, FlopCounter)> = self.pool.install(|| {
            (0..block.count())
                .into_par_iter()
                .map(|i| {
                    let mut local = FlopCounter::new();
                    let panel = DenseMatrix::from_column_major(n, r, block.panel(i).to_vec());
                    let mut rec = assemble_problem(
                        &design.s_tl,
                        &design.b_t,
                        &design.xl,
                        &panel,
                        &design.y,
                        &mut local,
                    );
                    rec.index = block.first_index() + i;
                    (rec, local)
                })
                .collect()
        });

        let mut records = Vec::with_capacity(results.len());
        for (rec, local) in results {
            flops.merge(&local);
            records.push(rec);
        }
        records
    }

    /// Whiten then solve: the full treatment of one streamed block.
    pub fn process_block(
        &self,
        block: &mut XrBlock,
        flops: &mut FlopCounter,
    ) -> Vec<SolutionRecord> {
        self.whiten_block(block, flops);
        self.solve_block(block, flops)
    }
}

/// Drives the engine over an in-memory block sequence.
pub fn solve_sequence_hpgwas<I>(
    cov: &SymmetricMatrix,
    xl: &DenseMatrix,
    blocks: I,
    y: &[f64],
    workers: usize,
    flops: &mut FlopCounter,
) -> Result<Vec<SolutionRecord>, SolverError>
where
    I: IntoIterator<Item = XrBlock>,
{
    let engine = HpGwasEngine::new(cov, xl, y, workers, flops)?;
    let mut records = Vec::new();
    for mut block in blocks {
        records.extend(engine.process_block(&mut block, flops));
    }
    Ok(records)
}
