//! The out-of-core orchestrators.
//!
//! Both runners stream the panel file through the structure-exploiting
//! engine block by block and write output records as they are produced.
//! The synchronous runner blocks on every transfer, so its I/O is fully
//! exposed. The double-buffered runner keeps one read and one write in
//! flight while computing: two panel buffers exist, and at every instant
//! one is owned by the orchestrator (compute role) while the other is
//! inside the agent's in-flight request (I/O role). Ownership moves at
//! block boundaries only, so the role-swap invariant is enforced by the
//! type system rather than by assertions.
//!
//! Wait accounting: the runners time the initial load, every wait for a
//! current read, and every wait for a previous write. Under perfect
//! overlap everything but the initial load measures near zero.

use std::time::Instant;

use serde::Serialize;

use crate::kernels::{DenseMatrix, FlopCounter};
use crate::solvers::{HpGwasEngine, SolutionRecord, XrBlock};
use crate::storage::{read_static, DatasetPaths};

use super::agent::{IoPolicy, TransferAgent};
use super::schedule::BlockSchedule;
use super::StreamError;

/// Instrumentation for one block of a run.
#[derive(Debug, Clone, Serialize)]
pub struct BlockTiming {
    pub first: usize,
    pub count: usize,
    pub read_wait_s: f64,
    pub compute_s: f64,
    pub write_wait_s: f64,
}

/// Where a run's wall-clock time went.
///
/// `read_wait_s` includes the initial load (also broken out as
/// `initial_load_s`, since nothing can ever overlap it). `io_busy_s` is the
/// transfer agent's total service time, which may overlap compute.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub mode: &'static str,
    pub blocks_run: usize,
    pub wall_s: f64,
    pub compute_s: f64,
    pub read_wait_s: f64,
    pub write_wait_s: f64,
    pub initial_load_s: f64,
    pub io_busy_s: f64,
    pub blocks: Vec<BlockTiming>,
}

impl OverlapReport {
    /// All time spent blocked on transfers, initial load included.
    pub fn total_wait_s(&self) -> f64 {
        self.read_wait_s + self.write_wait_s
    }

    /// Wait that overlap could in principle have hidden: everything except
    /// the initial load.
    pub fn exposed_wait_s(&self) -> f64 {
        (self.total_wait_s() - self.initial_load_s).max(0.0)
    }

    /// Exposed wait as a share of wall time, both excluding the initial
    /// load.
    pub fn exposed_share(&self) -> f64 {
        let denom = self.wall_s - self.initial_load_s;
        if denom <= 0.0 {
            0.0
        } else {
            self.exposed_wait_s() / denom
        }
    }
}

/// Result of an out-of-core run: where the time went and what was computed.
/// The output records live in the dataset's b file.
#[derive(Debug)]
pub struct OocRun {
    pub report: OverlapReport,
    pub flops: FlopCounter,
}

struct RunState {
    engine: HpGwasEngine,
    agent: TransferAgent,
    flops: FlopCounter,
    timings: Vec<BlockTiming>,
    read_wait_s: f64,
    write_wait_s: f64,
    compute_s: f64,
    initial_load_s: f64,
    io_busy_s: f64,
    capacity: usize,
    n: usize,
    r: usize,
}

fn validate_schedule(schedule: &BlockSchedule, m: usize) -> Result<(), StreamError> {
    let blocks = schedule.blocks();
    let covers = blocks.first().map(|&(f, _)| f) == Some(0)
        && blocks.last().map(|&(f, c)| f + c) == Some(m)
        && blocks.windows(2).all(|w| w[0].0 + w[0].1 == w[1].0);
    if !covers {
        return Err(StreamError::InvalidBlockSize(format!(
            "schedule does not cover the {m} stored problems"
        )));
    }
    Ok(())
}

/// Shared setup: load statics, build the engine, start the agent.
fn prepare(
    paths: &DatasetPaths,
    schedule: &BlockSchedule,
    workers: usize,
    policy: IoPolicy,
) -> Result<RunState, StreamError> {
    let stat = read_static(&paths.static_file)?;
    let dims = stat.header.dims();
    validate_schedule(schedule, dims.m)?;
    let mut flops = FlopCounter::default();
    let engine = HpGwasEngine::new(&stat.cov, &stat.xl, &stat.y, workers, &mut flops)?;
    let agent = TransferAgent::spawn(&paths.xr_file, &paths.b_file, &stat.header, policy)?;
    Ok(RunState {
        engine,
        agent,
        flops,
        timings: Vec::with_capacity(schedule.num_blocks()),
        read_wait_s: 0.0,
        write_wait_s: 0.0,
        compute_s: 0.0,
        initial_load_s: 0.0,
        io_busy_s: 0.0,
        capacity: schedule.max_block(),
        n: dims.n,
        r: dims.r,
    })
}

impl RunState {
    fn check_capacity(&self, ordinal: usize, count: usize) -> Result<(), StreamError> {
        if count > self.capacity {
            return Err(StreamError::WorkspaceOverrun {
                block: ordinal,
                needed: count,
                capacity: self.capacity,
            });
        }
        Ok(())
    }

    /// Whiten + solve one block; returns its records and the panel buffer.
    fn compute_block(
        &mut self,
        first: usize,
        count: usize,
        data: Vec<f64>,
    ) -> (Vec<SolutionRecord>, Vec<f64>) {
        let panels = DenseMatrix::from_column_major(self.n, count * self.r, data);
        let mut block = XrBlock::new(first, count, panels);
        let records = self.engine.process_block(&mut block, &mut self.flops);
        (records, block.into_panels().into_vec())
    }

    fn finish(self, mode: &'static str, wall_s: f64) -> Result<OocRun, StreamError> {
        self.agent.finalize_outputs()?;
        Ok(OocRun {
            report: OverlapReport {
                mode,
                blocks_run: self.timings.len(),
                wall_s,
                compute_s: self.compute_s,
                read_wait_s: self.read_wait_s,
                write_wait_s: self.write_wait_s,
                initial_load_s: self.initial_load_s,
                io_busy_s: self.io_busy_s,
                blocks: self.timings,
            },
            flops: self.flops,
        })
    }
}

/// Non-overlapping runner: per block, a blocking read, the block's compute,
/// then a blocking write. Every transfer is exposed; the report proves it.
pub fn run_ooc_sync(
    paths: &DatasetPaths,
    schedule: &BlockSchedule,
    workers: usize,
    policy: IoPolicy,
) -> Result<OocRun, StreamError> {
    let start = Instant::now();
    let mut state = prepare(paths, schedule, workers, policy)?;
    let mut buf = Vec::with_capacity(state.capacity * state.n * state.r);

    for (ordinal, &(first, count)) in schedule.blocks().iter().enumerate() {
        state.check_capacity(ordinal, count)?;

        let t = Instant::now();
        let ticket = state.agent.submit_read(ordinal, first, count, buf)?;
        let (data, busy) = ticket.wait()?;
        let read_wait = t.elapsed().as_secs_f64();
        state.io_busy_s += busy.as_secs_f64();
        if ordinal == 0 {
            state.initial_load_s = read_wait;
        }

        let t = Instant::now();
        let (records, returned) = state.compute_block(first, count, data);
        buf = returned;
        let compute = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let ticket = state.agent.submit_write(ordinal, first, records)?;
        let (_, busy) = ticket.wait()?;
        let write_wait = t.elapsed().as_secs_f64();
        state.io_busy_s += busy.as_secs_f64();

        state.read_wait_s += read_wait;
        state.write_wait_s += write_wait;
        state.compute_s += compute;
        state.timings.push(BlockTiming {
            first,
            count,
            read_wait_s: read_wait,
            compute_s: compute,
            write_wait_s: write_wait,
        });
    }
    let wall = start.elapsed().as_secs_f64();
    state.finish("ooc-sync", wall)
}

/// Double-buffered runner. Per block: wait for the current read, prefetch
/// the next block into the buffer the previous compute released, compute,
/// wait out the previous write, then queue the current write.
///
/// The prefetch is issued directly after the current read is waited out
/// (not before, as the issue-then-wait phrasing of the overlapped loop
/// would allow): on a single in-order agent the service order is identical
/// either way, and waiting first keeps at most one read ticket alive, which
/// is what makes two panel buffers provably sufficient. The same reasoning
/// moves the wait for the previous write ahead of queueing the current one.
pub fn run_ooc_async(
    paths: &DatasetPaths,
    schedule: &BlockSchedule,
    workers: usize,
    policy: IoPolicy,
) -> Result<OocRun, StreamError> {
    let start = Instant::now();
    let mut state = prepare(paths, schedule, workers, policy)?;
    let blocks = schedule.blocks();
    let floats = state.capacity * state.n * state.r;

    // Buffer A goes straight into the first read; B becomes the first spare.
    let (first0, count0) = blocks[0];
    state.check_capacity(0, count0)?;
    let mut pending_read = Some(state.agent.submit_read(
        0,
        first0,
        count0,
        Vec::with_capacity(floats),
    )?);
    let mut spare: Option<Vec<f64>> = Some(Vec::with_capacity(floats));
    let mut pending_write: Option<super::agent::Ticket<Vec<SolutionRecord>>> = None;

    for (ordinal, &(first, count)) in blocks.iter().enumerate() {
        let t = Instant::now();
        let ticket = pending_read.take().expect("a read is always in flight");
        let (data, busy) = ticket.wait()?;
        let read_wait = t.elapsed().as_secs_f64();
        state.io_busy_s += busy.as_secs_f64();
        state.read_wait_s += read_wait;
        if ordinal == 0 {
            state.initial_load_s = read_wait;
        }

        if let Some(&(next_first, next_count)) = blocks.get(ordinal + 1) {
            state.check_capacity(ordinal + 1, next_count)?;
            let buf = spare.take().expect("previous compute released a buffer");
            pending_read = Some(state.agent.submit_read(
                ordinal + 1,
                next_first,
                next_count,
                buf,
            )?);
        }

        let t = Instant::now();
        let (records, returned) = state.compute_block(first, count, data);
        spare = Some(returned);
        let compute = t.elapsed().as_secs_f64();
        state.compute_s += compute;

        let t = Instant::now();
        if let Some(ticket) = pending_write.take() {
            let (_, busy) = ticket.wait()?;
            state.io_busy_s += busy.as_secs_f64();
        }
        let write_wait = t.elapsed().as_secs_f64();
        state.write_wait_s += write_wait;
        pending_write = Some(state.agent.submit_write(ordinal, first, records)?);

        state.timings.push(BlockTiming {
            first,
            count,
            read_wait_s: read_wait,
            compute_s: compute,
            write_wait_s: write_wait,
        });
    }

    // Drain the last write; this wait is inherently exposed.
    let t = Instant::now();
    if let Some(ticket) = pending_write.take() {
        let (_, busy) = ticket.wait()?;
        state.io_busy_s += busy.as_secs_f64();
    }
    let final_wait = t.elapsed().as_secs_f64();
    state.write_wait_s += final_wait;
    if let Some(last) = state.timings.last_mut() {
        last.write_wait_s += final_wait;
    }

    let wall = start.elapsed().as_secs_f64();
    state.finish("ooc-async", wall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{solve_sequence_hpgwas, ProblemDims, SolveStatus};
    use crate::storage::{generate_dataset, BlockReader, XrReader};
    use crate::streaming::schedule::plan_blocks;

    fn make_dataset(dir: &std::path::Path, dims: &ProblemDims, seed: u64) -> DatasetPaths {
        generate_dataset(dir, dims, seed, 1.0).unwrap()
    }

    fn read_b_bytes(paths: &DatasetPaths) -> Vec<u8> {
        std::fs::read(&paths.b_file).unwrap()
    }

    fn in_core_records(paths: &DatasetPaths, workers: usize) -> Vec<SolutionRecord> {
        let stat = read_static(&paths.static_file).unwrap();
        let dims = stat.header.dims();
        let block = XrReader::open(&paths.xr_file)
            .unwrap()
            .read_block(0, dims.m)
            .unwrap();
        let mut flops = FlopCounter::default();
        solve_sequence_hpgwas(
            &stat.cov,
            &stat.xl,
            [XrBlock::new(0, dims.m, block)],
            &stat.y,
            workers,
            &mut flops,
        )
        .unwrap()
    }

    #[test]
    fn sync_and_async_agree_bitwise_and_match_in_core() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(24, 2, 1, 30);
        let paths = make_dataset(dir.path(), &dims, 11);
        let schedule = plan_blocks(&dims, 7, 0, None).unwrap();

        let sync = run_ooc_sync(&paths, &schedule, 1, IoPolicy::Real).unwrap();
        let sync_bytes = read_b_bytes(&paths);

        let async_run = run_ooc_async(&paths, &schedule, 1, IoPolicy::Real).unwrap();
        let async_bytes = read_b_bytes(&paths);

        assert_eq!(sync_bytes, async_bytes, "modes must agree bitwise");
        assert_eq!(sync.flops, async_run.flops, "identical arithmetic");

        let in_core = in_core_records(&paths, 1);
        let mut reader = BlockReader::open(&paths.b_file).unwrap();
        assert!(reader.outputs_valid());
        let streamed = reader.read_all().unwrap();
        assert_eq!(streamed.len(), in_core.len());
        for (s, c) in streamed.iter().zip(&in_core) {
            assert_eq!(s.status, c.status);
            for (a, b) in s.b.iter().zip(&c.b) {
                assert_eq!(
                    a.to_bits(),
                    b.to_bits(),
                    "problem {}: streamed vs in-core must be bitwise equal",
                    s.index
                );
            }
        }
    }

    #[test]
    fn results_are_invariant_under_block_partition() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(20, 1, 1, 64);
        let paths = make_dataset(dir.path(), &dims, 4);

        let mut reference: Option<Vec<u8>> = None;
        for k in [1usize, 7, 64] {
            let schedule = plan_blocks(&dims, k, 0, None).unwrap();
            run_ooc_async(&paths, &schedule, 1, IoPolicy::Real).unwrap();
            let bytes = read_b_bytes(&paths);
            match &reference {
                None => reference = Some(bytes),
                Some(want) => assert_eq!(&bytes, want, "k = {k} changed the output bytes"),
            }
        }
        // A warmup block is just another partition.
        let schedule = plan_blocks(&dims, 16, 3, None).unwrap();
        run_ooc_async(&paths, &schedule, 1, IoPolicy::Real).unwrap();
        assert_eq!(read_b_bytes(&paths), reference.unwrap());
    }

    #[test]
    fn single_block_degenerates_to_in_core_plus_one_read_one_write() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(16, 1, 1, 12);
        let paths = make_dataset(dir.path(), &dims, 8);
        let schedule = plan_blocks(&dims, 12, 0, None).unwrap();
        assert_eq!(schedule.num_blocks(), 1);

        let run = run_ooc_async(&paths, &schedule, 1, IoPolicy::Real).unwrap();
        assert_eq!(run.report.blocks_run, 1);
        // Initial load and the final write drain are the only waits, and
        // both are exposed by construction.
        assert!(run.report.initial_load_s > 0.0);
        assert!(run.report.write_wait_s > 0.0);
        assert_eq!(run.report.read_wait_s, run.report.initial_load_s);

        let in_core = in_core_records(&paths, 1);
        let streamed = BlockReader::open(&paths.b_file)
            .unwrap()
            .read_all()
            .unwrap();
        for (s, c) in streamed.iter().zip(&in_core) {
            assert_eq!(s.b, c.b);
        }
    }

    #[test]
    fn sync_exposes_the_injected_latency_on_every_transfer() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(8, 1, 1, 16);
        let paths = make_dataset(dir.path(), &dims, 2);
        let schedule = plan_blocks(&dims, 2, 0, None).unwrap();
        assert_eq!(schedule.num_blocks(), 8);

        let run = run_ooc_sync(
            &paths,
            &schedule,
            1,
            IoPolicy::simulated(20.0, f64::INFINITY),
        )
        .unwrap();
        // 8 block reads at >= 20ms each, so read+write waits clear 8 x 20ms
        // even before counting the writes.
        assert!(
            run.report.total_wait_s() >= 8.0 * 0.020,
            "sync waits must be fully exposed, got {:.4}s",
            run.report.total_wait_s()
        );
        for b in &run.report.blocks {
            assert!(
                b.read_wait_s >= 0.019,
                "block read wait {:.4}",
                b.read_wait_s
            );
            assert!(
                b.write_wait_s >= 0.019,
                "block write wait {:.4}",
                b.write_wait_s
            );
        }
    }

    #[test]
    fn async_hides_io_in_a_compute_bound_config() {
        let dir = tempfile::tempdir().unwrap();
        // Whitening 512 panels at n = 512 costs ~1.4e8 flops per block,
        // tens of milliseconds on one core, dwarfing a 1ms simulated
        // latency.
        let dims = ProblemDims::new(512, 3, 1, 4096);
        let paths = make_dataset(dir.path(), &dims, 13);
        let schedule = plan_blocks(&dims, 512, 0, None).unwrap();
        assert_eq!(schedule.num_blocks(), 8);

        let run = run_ooc_async(
            &paths,
            &schedule,
            1,
            IoPolicy::simulated(1.0, f64::INFINITY),
        )
        .unwrap();
        let share = run.report.exposed_share();
        assert!(
            share <= 0.10,
            "exposed share {share:.3} exceeds 10% (report: {:?})",
            run.report
        );
    }

    #[test]
    fn async_in_an_io_bound_config_approaches_the_io_floor() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(16, 1, 1, 64);
        let paths = make_dataset(dir.path(), &dims, 17);
        let schedule = plan_blocks(&dims, 8, 0, None).unwrap();
        assert_eq!(schedule.num_blocks(), 8);

        let run = run_ooc_async(
            &paths,
            &schedule,
            1,
            IoPolicy::simulated(25.0, f64::INFINITY),
        )
        .unwrap();
        let first_compute = run.report.blocks[0].compute_s;
        let floor = run.report.io_busy_s + first_compute;
        assert!(
            run.report.wall_s <= 1.15 * floor,
            "wall {:.4}s vs 1.15 x floor {:.4}s",
            run.report.wall_s,
            1.15 * floor
        );
    }

    #[test]
    fn truncated_stream_aborts_with_the_block_and_leaves_outputs_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(16, 1, 1, 32);
        let paths = make_dataset(dir.path(), &dims, 3);
        // Chop the panel file inside block 3 of the k=8 partition.
        let keep = 48 + 8 * (16 * 28) as u64;
        std::fs::OpenOptions::new()
            .write(true)
            .open(&paths.xr_file)
            .unwrap()
            .set_len(keep)
            .unwrap();

        let schedule = plan_blocks(&dims, 8, 0, None).unwrap();
        let err = run_ooc_sync(&paths, &schedule, 1, IoPolicy::Real).unwrap_err();
        match err {
            StreamError::IoFailed { block, source } => {
                assert_eq!(block, 3);
                let text = source.to_string();
                assert!(
                    text.contains("[24, 32)"),
                    "error must name the block: {text}"
                );
            }
            other => panic!("expected IoFailed, got {other}"),
        }
        let reader = BlockReader::open(&paths.b_file).unwrap();
        assert!(
            !reader.outputs_valid(),
            "aborted run must leave outputs flagged invalid"
        );
    }

    #[test]
    fn rank_deficient_panels_stream_through_as_sentinels() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(16, 1, 1, 10);
        let paths = make_dataset(dir.path(), &dims, 21);
        // Overwrite panel 4 with a copy of the left design column: X_L and
        // X_R become linearly dependent, so problem 4 is rank deficient.
        let stat = read_static(&paths.static_file).unwrap();
        let mut xr = XrReader::open(&paths.xr_file).unwrap();
        let mut all = Vec::new();
        xr.read_block_into(0, 10, &mut all).unwrap();
        all[4 * 16..5 * 16].copy_from_slice(stat.xl.col(0));
        drop(xr);
        let header = crate::storage::DatasetHeader::new(&dims);
        let mut w = crate::storage::XrWriter::create(&paths.xr_file, &header).unwrap();
        w.append_panels(&all).unwrap();
        w.finish().unwrap();

        let schedule = plan_blocks(&dims, 3, 0, None).unwrap();
        run_ooc_async(&paths, &schedule, 1, IoPolicy::Real).unwrap();
        let records = BlockReader::open(&paths.b_file)
            .unwrap()
            .read_all()
            .unwrap();
        assert_eq!(records[4].status, SolveStatus::RankDeficient);
        for v in &records[4].b {
            assert_eq!(v.to_bits(), crate::storage::NAN_SENTINEL_BITS);
        }
        assert_eq!(records[3].status, SolveStatus::Ok);
        assert_eq!(records[5].status, SolveStatus::Ok);
    }

    #[test]
    fn report_waits_stay_within_wall_minus_compute_slack() {
        let dir = tempfile::tempdir().unwrap();
        let dims = ProblemDims::new(16, 1, 1, 24);
        let paths = make_dataset(dir.path(), &dims, 6);
        let schedule = plan_blocks(&dims, 6, 0, None).unwrap();
        for run in [
            run_ooc_sync(
                &paths,
                &schedule,
                1,
                IoPolicy::simulated(2.0, f64::INFINITY),
            )
            .unwrap(),
            run_ooc_async(
                &paths,
                &schedule,
                1,
                IoPolicy::simulated(2.0, f64::INFINITY),
            )
            .unwrap(),
        ] {
            let r = &run.report;
            // Generous scheduling slack: orchestration is cheap but not free.
            let slack = 0.25 * r.wall_s + 0.01;
            assert!(
                r.total_wait_s() <= r.wall_s - r.compute_s + slack,
                "{}: waits {:.4} wall {:.4} compute {:.4}",
                r.mode,
                r.total_wait_s(),
                r.wall_s,
                r.compute_s
            );
        }
    }
}
