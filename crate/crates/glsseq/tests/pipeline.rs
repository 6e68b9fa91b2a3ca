//! End-to-end pipeline: generate a dataset on disk, stream it through both
//! out-of-core modes under a memory limit, and check the output records
//! against an in-core run, bitwise.

use glsseq::kernels::FlopCounter;
use glsseq::solvers::{solve_sequence_hpgwas, ProblemDims, XrBlock};
use glsseq::storage::{generate_dataset, read_static, BlockReader, DatasetPaths, XrReader};
use glsseq::streaming::{plan_blocks, run_ooc_async, run_ooc_sync, select_block_size, IoPolicy};

fn in_core_b_coeffs(paths: &DatasetPaths, workers: usize) -> Vec<Vec<u64>> {
    let stat = read_static(&paths.static_file).unwrap();
    let dims = stat.header.dims();
    let panels = XrReader::open(&paths.xr_file)
        .unwrap()
        .read_block(0, dims.m)
        .unwrap();
    let mut flops = FlopCounter::default();
    solve_sequence_hpgwas(
        &stat.cov,
        &stat.xl,
        [XrBlock::new(0, dims.m, panels)],
        &stat.y,
        workers,
        &mut flops,
    )
    .unwrap()
    .into_iter()
    .map(|rec| rec.b.iter().map(|v| v.to_bits()).collect())
    .collect()
}

fn streamed_b_coeffs(paths: &DatasetPaths) -> Vec<Vec<u64>> {
    BlockReader::open(&paths.b_file)
        .unwrap()
        .read_all()
        .unwrap()
        .into_iter()
        .map(|rec| rec.b.iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn memory_limited_streaming_reproduces_the_in_core_run_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let dims = ProblemDims::new(64, 3, 1, 300);
    let paths = generate_dataset(dir.path(), &dims, 2024, 1.0).unwrap();

    // Pick the block size the way the CLI would: from a memory budget.
    // 200 kB holds the fixed state (~68 kB per half) plus ~58 panels per
    // workspace, forcing several blocks.
    let mem_limit = 200_000;
    let choice = select_block_size(mem_limit, &dims, 1e4, f64::INFINITY).unwrap();
    let schedule = plan_blocks(&dims, choice.block_size, 0, Some(mem_limit)).unwrap();
    assert!(
        schedule.num_blocks() >= 4,
        "budget should force several blocks, got {}",
        schedule.num_blocks()
    );

    let want = in_core_b_coeffs(&paths, 2);

    run_ooc_sync(&paths, &schedule, 2, IoPolicy::Real).unwrap();
    let sync_bits = streamed_b_coeffs(&paths);
    assert_eq!(sync_bits, want, "sync stream vs in-core");

    run_ooc_async(&paths, &schedule, 2, IoPolicy::Real).unwrap();
    let async_bits = streamed_b_coeffs(&paths);
    assert_eq!(async_bits, want, "async stream vs in-core");
}

#[test]
fn every_partition_of_the_stream_yields_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let dims = ProblemDims::new(32, 2, 1, 64);
    let paths = generate_dataset(dir.path(), &dims, 99, 1.0).unwrap();

    let mut reference: Option<Vec<u8>> = None;
    for k in [1usize, 7, 64] {
        let schedule = plan_blocks(&dims, k, 0, None).unwrap();
        run_ooc_sync(&paths, &schedule, 1, IoPolicy::Real).unwrap();
        let bytes = std::fs::read(&paths.b_file).unwrap();
        match &reference {
            None => reference = Some(bytes),
            Some(want) => assert_eq!(&bytes, want, "k = {k} changed the output"),
        }
    }
}

#[test]
fn overlap_report_separates_exposed_and_hidden_io() {
    let dir = tempfile::tempdir().unwrap();
    let dims = ProblemDims::new(96, 3, 1, 512);
    let paths = generate_dataset(dir.path(), &dims, 5, 1.0).unwrap();
    let schedule = plan_blocks(&dims, 64, 0, None).unwrap();
    let policy = IoPolicy::simulated(3.0, f64::INFINITY);

    let sync = run_ooc_sync(&paths, &schedule, 1, policy).unwrap();
    let async_run = run_ooc_async(&paths, &schedule, 1, policy).unwrap();

    // Sync exposes every one of the 8 reads and 8 writes (>= 3ms each).
    assert!(sync.report.total_wait_s() >= 16.0 * 0.003);
    // Async must hide most of it; seeing even half the sync wait would mean
    // the prefetch is broken.
    assert!(
        async_run.report.exposed_wait_s() <= 0.5 * sync.report.total_wait_s(),
        "async exposed {:.4}s vs sync {:.4}s",
        async_run.report.exposed_wait_s(),
        sync.report.total_wait_s()
    );
    // Identical arithmetic in both modes.
    assert_eq!(sync.flops, async_run.flops);
}
