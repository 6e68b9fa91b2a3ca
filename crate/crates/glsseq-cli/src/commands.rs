//! Subcommand implementations. Each returns `CmdError` mapped to an exit
//! code in `main`; anything printed to stdout is the human-readable summary,
//! the machine-readable version goes to `--report`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use glsseq::kernels::{DenseMatrix, FlopCounter};
use glsseq::solvers::{
    predicted_flops_dims, solve_explicit_inverse, solve_sequence_gwfgls, solve_sequence_hpgwas,
    solve_single_blackbox, Algorithm, HpGwasEngine, ProblemDims, SeqGlsContext, SolutionRecord,
    SolveStatus, XrBlock, MAX_PREDICTORS,
};
use glsseq::storage::{
    dump_records_csv, generate_dataset, read_static, BlockReader, BlockWriter, DatasetHeader,
    DatasetPaths, StaticData, StorageError, XrReader, NAN_SENTINEL_BITS,
};
use glsseq::streaming::{
    default_warmup, plan_blocks, run_ooc_async, run_ooc_sync, select_block_size, BlockSchedule,
    IoPolicy, OocRun, StreamError,
};
use serde::Serialize;

use crate::report::{
    config_echo, write_report, BenchReport, BenchRow, FlopSummary, ReportFormat, SolveReport,
    VerifyReport, REPORT_SCHEMA,
};

/// Default workspace budget when neither `--mem-limit` nor the environment
/// variable is set: 1 GiB.
const DEFAULT_MEM_LIMIT: u64 = 1 << 30;

/// Problems solved per timing probe when `--block-size 0` asks for
/// calibration.
const CALIBRATION_PROBLEMS: usize = 256;

pub enum CmdError {
    /// Bad arguments or an unusable request. Exit 2.
    Usage(String),
    /// The run itself failed: I/O, non-SPD covariance, dimension clash.
    /// Exit 3.
    Runtime(String),
    /// Verification ran to completion and the outputs are wrong. Exit 1.
    VerifyFailed(String),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::VerifyFailed(_) => 1,
            CmdError::Usage(_) => 2,
            CmdError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Runtime(m) | CmdError::VerifyFailed(m) => m,
        }
    }
}

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError::Usage(msg.into())
}

fn runtime(err: impl std::fmt::Display) -> CmdError {
    CmdError::Runtime(err.to_string())
}

/// Planning failures (block size, memory budget) are the caller's
/// configuration, not a broken run.
fn plan_error(err: StreamError) -> CmdError {
    match err {
        StreamError::InvalidBlockSize(_) | StreamError::InsufficientMemory { .. } => {
            CmdError::Usage(err.to_string())
        }
        other => CmdError::Runtime(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmArg {
    Blackbox,
    Seqgls,
    Hpgwas,
    Gwfgls,
}

impl AlgorithmArg {
    fn to_algorithm(self) -> Algorithm {
        match self {
            AlgorithmArg::Blackbox => Algorithm::Blackbox,
            AlgorithmArg::Seqgls => Algorithm::SeqGls,
            AlgorithmArg::Hpgwas => Algorithm::HpGwas,
            AlgorithmArg::Gwfgls => Algorithm::Gwfgls,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    /// Load every panel, solve in memory.
    Incore,
    /// Stream blocks with blocking transfers.
    OocSync,
    /// Stream blocks with transfers overlapped against compute.
    OocAsync,
}

impl ModeArg {
    fn name(self) -> &'static str {
        match self {
            ModeArg::Incore => "incore",
            ModeArg::OocSync => "ooc-sync",
            ModeArg::OocAsync => "ooc-async",
        }
    }
}

// ---------------------------------------------------------------------------
// gen

#[derive(Debug, clap::Args, Serialize)]
pub struct GenArgs {
    /// Directory for the three dataset files; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Observations per problem.
    #[arg(long)]
    pub n: usize,
    /// Shared design columns.
    #[arg(long, default_value_t = 3)]
    pub l: usize,
    /// Per-problem panel columns.
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// Number of problems.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Diagonal shift factor; larger is better conditioned.
    #[arg(long, default_value_t = 1.0)]
    pub conditioning: f64,
}

pub fn cmd_gen(args: GenArgs) -> Result<(), CmdError> {
    let dims = ProblemDims::new(args.n, args.l, args.r, args.m);
    dims.validate_with_cap(MAX_PREDICTORS)
        .map_err(|e| usage(e.to_string()))?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| runtime(format!("create {}: {e}", args.out.display())))?;

    let start = Instant::now();
    let paths =
        generate_dataset(&args.out, &dims, args.seed, args.conditioning).map_err(|e| match e {
            StorageError::InvalidArgument(_) | StorageError::DimMismatch(_) => usage(e.to_string()),
            other => runtime(other),
        })?;
    let wall = start.elapsed().as_secs_f64();

    let file_line = |path: &Path| -> String {
        let bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        format!("  {} ({bytes} bytes)", path.display())
    };
    println!(
        "generated n={} l={} r={} m={} seed={} conditioning={} in {:.2}s",
        args.n, args.l, args.r, args.m, args.seed, args.conditioning, wall
    );
    println!("{}", file_line(&paths.static_file));
    println!("{}", file_line(&paths.xr_file));
    println!("{}", file_line(&paths.b_file));
    Ok(())
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct SolveArgs {
    /// Dataset directory produced by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Hpgwas)]
    pub algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Incore)]
    pub mode: ModeArg,
    /// Worker threads for the block solves.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Panels per streamed block; 0 picks the largest block the memory
    /// budget allows, after a short calibration burst.
    #[arg(long, default_value_t = 0)]
    pub block_size: usize,
    /// Skip the small first block that fills the transfer pipeline.
    #[arg(long)]
    pub no_warmup: bool,
    /// Byte budget covering resident inputs plus two block workspaces.
    #[arg(long, env = "GLSSEQ_MEM_LIMIT")]
    pub mem_limit: Option<u64>,
    /// Added per-transfer latency for simulated I/O, in milliseconds.
    #[arg(long, default_value_t = 0.0)]
    pub sim_latency_ms: f64,
    /// Simulated transfer bandwidth in bytes/second; 0 means unlimited.
    #[arg(long, default_value_t = 0.0)]
    pub sim_bandwidth: f64,
    /// Write a machine-readable report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report_format: ReportFormat,
}

/// Outcome of the solve proper, before reporting.
struct SolveOutcome {
    wall_s: f64,
    flops: FlopCounter,
    records_written: usize,
    rank_deficient: usize,
    block_size: usize,
    warmup: usize,
    overlap: Option<glsseq::streaming::OverlapReport>,
}

pub fn cmd_solve(args: SolveArgs) -> Result<(), CmdError> {
    if args.workers < 1 {
        return Err(usage("--workers must be at least 1"));
    }
    if args.sim_latency_ms < 0.0 || args.sim_bandwidth < 0.0 {
        return Err(usage("simulated latency and bandwidth must be nonnegative"));
    }
    let paths = DatasetPaths::in_dir(&args.data);
    let header = read_xr_header(&paths)?;
    let dims = header.dims();

    let outcome = match args.mode {
        ModeArg::Incore => solve_incore(&args, &paths, &dims)?,
        ModeArg::OocSync | ModeArg::OocAsync => solve_ooc(&args, &paths, &dims)?,
    };

    let algorithm = args.algorithm.to_algorithm();
    let predicted = predicted_flops_dims(algorithm, &dims);
    let measured = FlopSummary::from_counter(&outcome.flops);
    let gap = if predicted > 0 {
        (measured.total as f64 - predicted as f64).abs() / predicted as f64
    } else {
        0.0
    };
    let report = SolveReport {
        schema: REPORT_SCHEMA,
        config: config_echo(&args),
        n: dims.n,
        l: dims.l,
        r: dims.r,
        m: dims.m,
        algorithm: algorithm.to_string(),
        mode: args.mode.name().to_string(),
        workers: args.workers,
        block_size: outcome.block_size,
        warmup: outcome.warmup,
        wall_s: outcome.wall_s,
        gflops: measured.total as f64 / outcome.wall_s.max(1e-12) / 1e9,
        measured,
        predicted_flops: predicted,
        predicted_gap: gap,
        records_written: outcome.records_written,
        rank_deficient: outcome.rank_deficient,
        overlap: outcome.overlap,
    };

    println!(
        "solved {} problems (n={} p={}) with {} / {} in {:.3}s ({:.2} GFLOP/s)",
        report.m,
        report.n,
        dims.p(),
        report.algorithm,
        report.mode,
        report.wall_s,
        report.gflops
    );
    println!(
        "flops measured {} predicted {} (gap {:.2e}), matrix-matrix share {:.1}%",
        report.measured.total,
        report.predicted_flops,
        report.predicted_gap,
        100.0 * report.measured.matrix_matrix_share
    );
    if report.rank_deficient > 0 {
        println!("rank-deficient problems: {}", report.rank_deficient);
    }
    if let Some(overlap) = &report.overlap {
        println!(
            "streaming: {} blocks (block size {}, warmup {}), compute {:.3}s, \
             read wait {:.3}s, write wait {:.3}s, exposed wait {:.3}s ({:.1}% of post-load wall)",
            overlap.blocks_run,
            report.block_size,
            report.warmup,
            overlap.compute_s,
            overlap.read_wait_s,
            overlap.write_wait_s,
            overlap.exposed_wait_s(),
            100.0 * overlap.exposed_share()
        );
    }
    emit_report(&report, SolveReport::csv, &args.report, args.report_format)?;
    println!("outputs written to {}", paths.b_file.display());
    Ok(())
}

fn read_xr_header(paths: &DatasetPaths) -> Result<DatasetHeader, CmdError> {
    Ok(*XrReader::open(&paths.xr_file).map_err(runtime)?.header())
}

fn count_rank_deficient(records: &[SolutionRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.status == SolveStatus::RankDeficient)
        .count()
}

/// Assembles `X_i = (X_L | panel_i)` into a fresh column-major matrix.
fn assemble_design(xl: &DenseMatrix, panels: &DenseMatrix, i: usize, r: usize) -> DenseMatrix {
    let n = xl.rows();
    let p = xl.cols() + r;
    let mut buf = Vec::with_capacity(n * p);
    buf.extend_from_slice(xl.as_slice());
    buf.extend_from_slice(panels.cols_slice(i * r, r));
    DenseMatrix::from_column_major(n, p, buf)
}

fn solve_incore(
    args: &SolveArgs,
    paths: &DatasetPaths,
    dims: &ProblemDims,
) -> Result<SolveOutcome, CmdError> {
    let StaticData { header, cov, xl, y } = read_static(&paths.static_file).map_err(runtime)?;
    let mut xr = XrReader::open(&paths.xr_file).map_err(runtime)?;
    if xr.header().dims() != header.dims() {
        return Err(runtime("static and panel files disagree on dimensions"));
    }
    let panels = xr.read_block(0, dims.m).map_err(runtime)?;

    let start = Instant::now();
    let mut flops = FlopCounter::new();
    let records = match args.algorithm {
        AlgorithmArg::Hpgwas => solve_sequence_hpgwas(
            &cov,
            &xl,
            std::iter::once(XrBlock::new(0, dims.m, panels)),
            &y,
            args.workers,
            &mut flops,
        )
        .map_err(runtime)?,
        AlgorithmArg::Gwfgls => solve_sequence_gwfgls(
            &cov,
            &xl,
            std::iter::once(XrBlock::new(0, dims.m, panels)),
            &y,
            &mut flops,
        )
        .map_err(runtime)?,
        AlgorithmArg::Blackbox => {
            let mut records = Vec::with_capacity(dims.m);
            for i in 0..dims.m {
                let x = assemble_design(&xl, &panels, i, dims.r);
                let mut rec = solve_single_blackbox(&cov, &x, &y, &mut flops).map_err(runtime)?;
                rec.index = i;
                records.push(rec);
            }
            records
        }
        AlgorithmArg::Seqgls => {
            let ctx = SeqGlsContext::new(&cov, &y, &mut flops).map_err(runtime)?;
            let mut records = Vec::with_capacity(dims.m);
            for i in 0..dims.m {
                let x = assemble_design(&xl, &panels, i, dims.r);
                records.push(ctx.solve_one(i, &x, &mut flops).map_err(runtime)?);
            }
            records
        }
    };

    let mut writer = BlockWriter::create(&paths.b_file, &header).map_err(runtime)?;
    writer.write_block(0, &records).map_err(runtime)?;
    writer.finalize().map_err(runtime)?;
    let wall_s = start.elapsed().as_secs_f64();

    Ok(SolveOutcome {
        wall_s,
        flops,
        records_written: records.len(),
        rank_deficient: count_rank_deficient(&records),
        block_size: 0,
        warmup: 0,
        overlap: None,
    })
}

/// Times one block read and one block solve on a short prefix of the
/// stream, returning (problems/s compute, bytes/s transfer).
fn calibrate_rates(
    paths: &DatasetPaths,
    dims: &ProblemDims,
    workers: usize,
) -> Result<(f64, f64), CmdError> {
    let count = CALIBRATION_PROBLEMS.min(dims.m);
    let mut xr = XrReader::open(&paths.xr_file).map_err(runtime)?;

    let t = Instant::now();
    let panels = xr.read_block(0, count).map_err(runtime)?;
    let read_s = t.elapsed().as_secs_f64().max(1e-9);
    let io_rate = (count * dims.n * dims.r * 8) as f64 / read_s;

    let StaticData { cov, xl, y, .. } = read_static(&paths.static_file).map_err(runtime)?;
    let mut flops = FlopCounter::new();
    let engine = HpGwasEngine::new(&cov, &xl, &y, workers, &mut flops).map_err(runtime)?;
    let mut block = XrBlock::new(0, count, panels);
    let t = Instant::now();
    engine.process_block(&mut block, &mut flops);
    let solve_s = t.elapsed().as_secs_f64().max(1e-9);
    let compute_rate = count as f64 / solve_s;

    Ok((compute_rate, io_rate))
}

fn solve_ooc(
    args: &SolveArgs,
    paths: &DatasetPaths,
    dims: &ProblemDims,
) -> Result<SolveOutcome, CmdError> {
    if args.algorithm != AlgorithmArg::Hpgwas {
        return Err(usage(format!(
            "streamed modes support only the structure-exploiting solver; \
             rerun with --algorithm hpgwas or --mode incore (got {:?})",
            args.algorithm
        )));
    }
    let mem_limit = args.mem_limit.unwrap_or(DEFAULT_MEM_LIMIT);

    let block_size = if args.block_size > 0 {
        args.block_size
    } else {
        let (compute_rate, io_rate) = calibrate_rates(paths, dims, args.workers)?;
        let choice =
            select_block_size(mem_limit, dims, compute_rate, io_rate).map_err(plan_error)?;
        if choice.io_bound {
            println!(
                "note: transfers outpace compute at this block size; \
                 overlap will hide only part of the I/O"
            );
        }
        choice.block_size.min(dims.m)
    };
    let warmup = if args.no_warmup {
        0
    } else {
        default_warmup(block_size)
    };
    let schedule = plan_blocks(dims, block_size, warmup, Some(mem_limit)).map_err(plan_error)?;

    let policy = if args.sim_latency_ms > 0.0 || args.sim_bandwidth > 0.0 {
        IoPolicy::simulated(args.sim_latency_ms, args.sim_bandwidth)
    } else {
        IoPolicy::Real
    };

    let run: OocRun = match args.mode {
        ModeArg::OocSync => run_ooc_sync(paths, &schedule, args.workers, policy),
        ModeArg::OocAsync => run_ooc_async(paths, &schedule, args.workers, policy),
        ModeArg::Incore => unreachable!("in-core handled by caller"),
    }
    .map_err(|e| match e {
        StreamError::Solver(inner) => runtime(inner),
        other => plan_error(other),
    })?;

    let mut reader = BlockReader::open(&paths.b_file).map_err(runtime)?;
    let records = reader.read_all().map_err(runtime)?;

    Ok(SolveOutcome {
        wall_s: run.report.wall_s,
        flops: run.flops,
        records_written: records.len(),
        rank_deficient: count_rank_deficient(&records),
        block_size,
        warmup,
        overlap: Some(run.report),
    })
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, clap::Args, Serialize)]
pub struct VerifyArgs {
    /// Dataset directory holding inputs and solved outputs.
    #[arg(long)]
    pub data: PathBuf,
    /// Largest relative error accepted per coefficient vector.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Write a machine-readable report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report_format: ReportFormat,
}

/// Oracle verification is O(n^3) per call; past this size a check costs
/// more than the original solve by orders of magnitude.
const VERIFY_MAX_N: usize = 512;

/// Panels verified per stream read.
const VERIFY_CHUNK: usize = 512;

pub fn cmd_verify(args: VerifyArgs) -> Result<(), CmdError> {
    if !args.tolerance.is_finite() || args.tolerance <= 0.0 {
        return Err(usage("--tolerance must be positive and finite"));
    }
    let paths = DatasetPaths::in_dir(&args.data);
    let StaticData { header, cov, xl, y } = read_static(&paths.static_file).map_err(runtime)?;
    let dims = header.dims();
    if dims.n > VERIFY_MAX_N {
        return Err(usage(format!(
            "verification inverts the covariance per problem and is limited to n <= {VERIFY_MAX_N} \
             (dataset has n = {})",
            dims.n
        )));
    }

    let mut reader = BlockReader::open(&paths.b_file).map_err(runtime)?;
    if !reader.outputs_valid() {
        return Err(runtime(
            "output file is not finalized; run solve before verify",
        ));
    }
    if reader.header().dims() != header.dims() {
        return Err(runtime("static and output files disagree on dimensions"));
    }
    let records = reader.read_all().map_err(runtime)?;
    let mut xr = XrReader::open(&paths.xr_file).map_err(runtime)?;

    let mut max_rel_err = 0.0f64;
    let mut rank_deficient = 0usize;
    let mut failing: Vec<usize> = Vec::new();
    let mut first = 0usize;
    while first < dims.m {
        let count = VERIFY_CHUNK.min(dims.m - first);
        let panels = xr.read_block(first, count).map_err(runtime)?;
        for j in 0..count {
            let i = first + j;
            let rec = &records[i];
            if rec.index != i {
                return Err(runtime(format!(
                    "record {i} carries index {}; output file is inconsistent",
                    rec.index
                )));
            }
            match rec.status {
                SolveStatus::RankDeficient => {
                    rank_deficient += 1;
                    // Nothing numeric to compare; the writer must have
                    // stored the quiet-NaN sentinel in every slot.
                    if rec.b.iter().any(|v| v.to_bits() != NAN_SENTINEL_BITS) {
                        if failing.len() < 16 {
                            failing.push(i);
                        }
                        max_rel_err = f64::INFINITY;
                    }
                }
                SolveStatus::Ok => {
                    let x = assemble_design(&xl, &panels, j, dims.r);
                    let oracle = solve_explicit_inverse(&cov, &x, &y)
                        .map_err(|e| runtime(format!("oracle failed on problem {i}: {e}")))?;
                    let scale = oracle
                        .iter()
                        .fold(0.0f64, |a, v| a.max(v.abs()))
                        .max(f64::MIN_POSITIVE);
                    let err = rec
                        .b
                        .iter()
                        .zip(&oracle)
                        .fold(0.0f64, |a, (got, want)| a.max((got - want).abs()));
                    let rel = err / scale;
                    // NaN counts as a failure, so route it explicitly.
                    if (rel.is_nan() || rel > args.tolerance) && failing.len() < 16 {
                        failing.push(i);
                    }
                    max_rel_err = max_rel_err.max(rel);
                }
            }
        }
        first += count;
    }

    let pass = failing.is_empty() && max_rel_err.is_finite() && max_rel_err <= args.tolerance;
    let report = VerifyReport {
        schema: REPORT_SCHEMA,
        config: config_echo(&args),
        problems: dims.m,
        rank_deficient,
        max_rel_err,
        tolerance: args.tolerance,
        pass,
        failing: failing.clone(),
    };
    println!(
        "verified {} problems ({} rank-deficient): max relative error {:.3e} vs tolerance {:.1e}",
        report.problems, report.rank_deficient, report.max_rel_err, report.tolerance
    );
    emit_report(&report, VerifyReport::csv, &args.report, args.report_format)?;

    if pass {
        println!("PASS");
        Ok(())
    } else {
        Err(CmdError::VerifyFailed(format!(
            "{} problems exceed the tolerance (first failures: {:?})",
            failing.len(),
            failing
        )))
    }
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepArg {
    /// Compare the four solvers on the same in-core run.
    Algorithms,
    /// Scale worker threads for the block solves.
    Workers,
    /// Compare streaming modes under the same schedule.
    Modes,
    /// Grow the sequence length over prefixes of the stream.
    Problems,
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct BenchArgs {
    /// Dataset directory produced by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SweepArg::Algorithms)]
    pub sweep: SweepArg,
    /// Solver for the workers/modes/problems sweeps.
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Hpgwas)]
    pub algorithm: AlgorithmArg,
    /// Comma-separated worker counts for --sweep workers.
    #[arg(long, default_value = "1,2,4")]
    pub workers: String,
    /// Comma-separated prefix lengths for --sweep problems; defaults to
    /// m/4, m/2, m.
    #[arg(long)]
    pub problems: Option<String>,
    /// Panels per block for --sweep modes; 0 sizes from the memory budget.
    #[arg(long, default_value_t = 0)]
    pub block_size: usize,
    #[arg(long, env = "GLSSEQ_MEM_LIMIT")]
    pub mem_limit: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub sim_latency_ms: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sim_bandwidth: f64,
    /// Write a machine-readable report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report_format: ReportFormat,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>, CmdError> {
    let values: Result<Vec<usize>, _> =
        text.split(',').map(|s| s.trim().parse::<usize>()).collect();
    let values = values.map_err(|e| usage(format!("bad {what} list {text:?}: {e}")))?;
    if values.is_empty() || values.contains(&0) {
        return Err(usage(format!("{what} list must be nonempty and positive")));
    }
    Ok(values)
}

/// In-memory dataset shared across sweep points so each row times only the
/// solve.
struct LoadedData {
    dims: ProblemDims,
    data: StaticData,
    panels: DenseMatrix,
}

fn load_all(paths: &DatasetPaths) -> Result<LoadedData, CmdError> {
    let data = read_static(&paths.static_file).map_err(runtime)?;
    let dims = data.header.dims();
    let mut xr = XrReader::open(&paths.xr_file).map_err(runtime)?;
    let panels = xr.read_block(0, dims.m).map_err(runtime)?;
    Ok(LoadedData { dims, data, panels })
}

/// Runs one in-core solve over the first `m_used` problems and reports
/// (wall seconds, counter).
fn timed_incore(
    loaded: &LoadedData,
    algorithm: AlgorithmArg,
    workers: usize,
    m_used: usize,
) -> Result<(f64, FlopCounter), CmdError> {
    let LoadedData { dims, data, panels } = loaded;
    let StaticData { cov, xl, y, .. } = data;
    let sub = DenseMatrix::from_column_major(
        dims.n,
        m_used * dims.r,
        panels.cols_slice(0, m_used * dims.r).to_vec(),
    );
    let mut flops = FlopCounter::new();
    let start = Instant::now();
    match algorithm {
        AlgorithmArg::Hpgwas => {
            solve_sequence_hpgwas(
                cov,
                xl,
                std::iter::once(XrBlock::new(0, m_used, sub)),
                y,
                workers,
                &mut flops,
            )
            .map_err(runtime)?;
        }
        AlgorithmArg::Gwfgls => {
            solve_sequence_gwfgls(
                cov,
                xl,
                std::iter::once(XrBlock::new(0, m_used, sub)),
                y,
                &mut flops,
            )
            .map_err(runtime)?;
        }
        AlgorithmArg::Blackbox => {
            for i in 0..m_used {
                let x = assemble_design(xl, &sub, i, dims.r);
                solve_single_blackbox(cov, &x, y, &mut flops).map_err(runtime)?;
            }
        }
        AlgorithmArg::Seqgls => {
            let ctx = SeqGlsContext::new(cov, y, &mut flops).map_err(runtime)?;
            for i in 0..m_used {
                let x = assemble_design(xl, &sub, i, dims.r);
                ctx.solve_one(i, &x, &mut flops).map_err(runtime)?;
            }
        }
    }
    Ok((start.elapsed().as_secs_f64(), flops))
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), CmdError> {
    let paths = DatasetPaths::in_dir(&args.data);
    let rows = match args.sweep {
        SweepArg::Algorithms => bench_algorithms(&args, &paths)?,
        SweepArg::Workers => bench_workers(&args, &paths)?,
        SweepArg::Modes => bench_modes(&args, &paths)?,
        SweepArg::Problems => bench_problems(&args, &paths)?,
    };

    print_rows(&rows);
    let report = BenchReport {
        schema: REPORT_SCHEMA,
        config: config_echo(&args),
        sweep: format!("{:?}", args.sweep).to_lowercase(),
        rows,
    };
    emit_report(&report, BenchReport::csv, &args.report, args.report_format)?;
    Ok(())
}

fn bench_algorithms(_args: &BenchArgs, paths: &DatasetPaths) -> Result<Vec<BenchRow>, CmdError> {
    let loaded = load_all(paths)?;
    let m = loaded.dims.m;
    if m > 2_000 {
        println!("note: the from-scratch solver refactors the covariance {m} times; this may take a while");
    }

    let order = [
        AlgorithmArg::Hpgwas,
        AlgorithmArg::Seqgls,
        AlgorithmArg::Gwfgls,
        AlgorithmArg::Blackbox,
    ];
    let mut rows = Vec::new();
    let mut hp_flops = 0u64;
    for alg in order {
        let (wall, flops) = timed_incore(&loaded, alg, 1, m)?;
        let total = flops.total();
        if alg == AlgorithmArg::Hpgwas {
            hp_flops = total;
        }
        let predicted = predicted_flops_dims(alg.to_algorithm(), &loaded.dims);
        let mut values = std::collections::BTreeMap::new();
        values.insert("wall_s", wall);
        values.insert("gflops", total as f64 / wall.max(1e-12) / 1e9);
        values.insert("measured_flops", total as f64);
        values.insert("predicted_flops", predicted as f64);
        values.insert("flops_vs_hpgwas", total as f64 / hp_flops.max(1) as f64);
        values.insert("mm_share_pct", 100.0 * flops.matrix_matrix_share());
        rows.push(BenchRow {
            label: alg.to_algorithm().to_string(),
            values,
        });
    }
    Ok(rows)
}

fn bench_workers(args: &BenchArgs, paths: &DatasetPaths) -> Result<Vec<BenchRow>, CmdError> {
    let counts = parse_list(&args.workers, "workers")?;
    let loaded = load_all(paths)?;
    let m = loaded.dims.m;
    let mut rows = Vec::new();
    let mut base_wall = 0.0f64;
    for (idx, &w) in counts.iter().enumerate() {
        let (wall, flops) = timed_incore(&loaded, args.algorithm, w, m)?;
        if idx == 0 {
            base_wall = wall;
        }
        let mut values = std::collections::BTreeMap::new();
        values.insert("workers", w as f64);
        values.insert("wall_s", wall);
        values.insert("speedup", base_wall / wall.max(1e-12));
        values.insert("gflops", flops.total() as f64 / wall.max(1e-12) / 1e9);
        rows.push(BenchRow {
            label: format!("workers={w}"),
            values,
        });
    }
    Ok(rows)
}

fn bench_modes(args: &BenchArgs, paths: &DatasetPaths) -> Result<Vec<BenchRow>, CmdError> {
    if args.algorithm != AlgorithmArg::Hpgwas {
        return Err(usage(
            "--sweep modes streams blocks and supports only --algorithm hpgwas",
        ));
    }
    let header = read_xr_header(paths)?;
    let dims = header.dims();
    let mem_limit = args.mem_limit.unwrap_or(DEFAULT_MEM_LIMIT);
    let block_size = if args.block_size > 0 {
        args.block_size
    } else {
        let (compute_rate, io_rate) = calibrate_rates(paths, &dims, 1)?;
        select_block_size(mem_limit, &dims, compute_rate, io_rate)
            .map_err(plan_error)?
            .block_size
            .min(dims.m)
    };
    let schedule: BlockSchedule = plan_blocks(
        &dims,
        block_size,
        default_warmup(block_size),
        Some(mem_limit),
    )
    .map_err(plan_error)?;
    let policy = if args.sim_latency_ms > 0.0 || args.sim_bandwidth > 0.0 {
        IoPolicy::simulated(args.sim_latency_ms, args.sim_bandwidth)
    } else {
        IoPolicy::Real
    };

    let mut rows = Vec::new();
    for (label, run) in [
        ("ooc-sync", run_ooc_sync(paths, &schedule, 1, policy)),
        ("ooc-async", run_ooc_async(paths, &schedule, 1, policy)),
    ] {
        let run = run.map_err(|e| match e {
            StreamError::Solver(inner) => runtime(inner),
            other => plan_error(other),
        })?;
        let r = &run.report;
        let mut values = std::collections::BTreeMap::new();
        values.insert("wall_s", r.wall_s);
        values.insert("compute_s", r.compute_s);
        values.insert("read_wait_s", r.read_wait_s);
        values.insert("write_wait_s", r.write_wait_s);
        values.insert("exposed_wait_s", r.exposed_wait_s());
        values.insert("exposed_pct", 100.0 * r.exposed_share());
        values.insert("io_busy_s", r.io_busy_s);
        values.insert("blocks", r.blocks_run as f64);
        rows.push(BenchRow {
            label: label.to_string(),
            values,
        });
    }
    Ok(rows)
}

fn bench_problems(args: &BenchArgs, paths: &DatasetPaths) -> Result<Vec<BenchRow>, CmdError> {
    let loaded = load_all(paths)?;
    let m = loaded.dims.m;
    let lengths = match &args.problems {
        Some(text) => parse_list(text, "problems")?,
        None => vec![(m / 4).max(1), (m / 2).max(1), m],
    };
    let mut rows = Vec::new();
    for &m_used in &lengths {
        if m_used > m {
            return Err(usage(format!(
                "prefix {m_used} exceeds the {m} problems in the dataset"
            )));
        }
        let (wall, flops) = timed_incore(&loaded, args.algorithm, 1, m_used)?;
        let mut values = std::collections::BTreeMap::new();
        values.insert("m", m_used as f64);
        values.insert("wall_s", wall);
        values.insert("measured_flops", flops.total() as f64);
        values.insert("gflops", flops.total() as f64 / wall.max(1e-12) / 1e9);
        rows.push(BenchRow {
            label: format!("m={m_used}"),
            values,
        });
    }
    Ok(rows)
}

fn print_rows(rows: &[BenchRow]) {
    let Some(first) = rows.first() else {
        println!("no rows");
        return;
    };
    let keys: Vec<&str> = first.values.keys().copied().collect();
    let mut header = format!("{:<16}", "label");
    for key in &keys {
        header.push_str(&format!(" {key:>16}"));
    }
    println!("{header}");
    for row in rows {
        let mut line = format!("{:<16}", row.label);
        for key in &keys {
            let v = row.values.get(key).copied().unwrap_or(f64::NAN);
            if v.abs() >= 1e6 {
                line.push_str(&format!(" {v:>16.3e}"));
            } else {
                line.push_str(&format!(" {v:>16.4}"));
            }
        }
        println!("{line}");
    }
}

// ---------------------------------------------------------------------------
// dump

#[derive(Debug, clap::Args, Serialize)]
pub struct DumpArgs {
    /// Dataset directory holding solved outputs.
    #[arg(long)]
    pub data: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_dump(args: DumpArgs) -> Result<(), CmdError> {
    let paths = DatasetPaths::in_dir(&args.data);
    let mut reader = BlockReader::open(&paths.b_file).map_err(runtime)?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| runtime(format!("create {}: {e}", path.display())))?;
            let mut out = std::io::BufWriter::new(file);
            dump_records_csv(&mut reader, &mut out).map_err(dump_error)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            dump_records_csv(&mut reader, &mut out).map_err(dump_error)?;
        }
    }
    Ok(())
}

fn dump_error(err: StorageError) -> CmdError {
    match err {
        StorageError::InvalidArgument(_) => CmdError::Usage(err.to_string()),
        other => runtime(other),
    }
}

// ---------------------------------------------------------------------------

fn emit_report<T: Serialize>(
    report: &T,
    csv: impl FnOnce(&T) -> String,
    path: &Option<PathBuf>,
    format: ReportFormat,
) -> Result<(), CmdError> {
    if let Some(path) = path {
        write_report(report, csv, path, format)
            .map_err(|e| runtime(format!("write report {}: {e}", path.display())))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}
