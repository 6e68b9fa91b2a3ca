//! End-to-end subprocess tests: the binary's exit codes, determinism, and
//! the gen -> solve -> verify -> dump pipeline.

use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_glsseq")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn glsseq")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "glsseq {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn sha256_file(path: &Path) -> String {
    let bytes = std::fs::read(path).expect("read file");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    format!("{:x}", hasher.finalize())
}

fn gen_dataset(dir: &Path, n: usize, l: usize, r: usize, m: usize, seed: u64) -> PathBuf {
    let ds = dir.join("ds");
    run_ok(&[
        "gen",
        "--out",
        ds.to_str().unwrap(),
        "--n",
        &n.to_string(),
        "--l",
        &l.to_string(),
        "--r",
        &r.to_string(),
        "--m",
        &m.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    ds
}

/// Overwrites one f64 at `offset` to corrupt a file in place.
fn poke_f64(path: &Path, offset: u64, value: f64) {
    let mut f = std::fs::OpenOptions::new()
        .write(true)
        .open(path)
        .expect("open for poke");
    f.seek(SeekFrom::Start(offset)).unwrap();
    f.write_all(&value.to_le_bytes()).unwrap();
}

#[test]
fn generation_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = gen_dataset(&tmp.path().join("a"), 32, 3, 1, 20, 11);
    let b = gen_dataset(&tmp.path().join("b"), 32, 3, 1, 20, 11);
    let c = gen_dataset(&tmp.path().join("c"), 32, 3, 1, 20, 12);

    for file in ["static.gls", "xr.gls"] {
        assert_eq!(
            sha256_file(&a.join(file)),
            sha256_file(&b.join(file)),
            "same seed must produce identical {file}"
        );
        assert_ne!(
            sha256_file(&a.join(file)),
            sha256_file(&c.join(file)),
            "different seeds must differ in {file}"
        );
    }
}

#[test]
fn every_algorithm_solves_and_passes_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 40, 2, 2, 24, 3);
    let ds = ds.to_str().unwrap();

    for alg in ["blackbox", "seqgls", "hpgwas", "gwfgls"] {
        run_ok(&["solve", "--data", ds, "--algorithm", alg]);
        run_ok(&["verify", "--data", ds]);
    }
}

#[test]
fn streamed_solves_write_the_same_bytes_as_in_core() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 48, 3, 1, 65, 9);
    let dss = ds.to_str().unwrap();

    run_ok(&["solve", "--data", dss, "--algorithm", "hpgwas"]);
    let reference = sha256_file(&ds.join("b.gls"));

    run_ok(&[
        "solve",
        "--data",
        dss,
        "--mode",
        "ooc-sync",
        "--block-size",
        "7",
    ]);
    assert_eq!(sha256_file(&ds.join("b.gls")), reference);

    run_ok(&[
        "solve",
        "--data",
        dss,
        "--mode",
        "ooc-async",
        "--block-size",
        "13",
        "--sim-latency-ms",
        "1",
    ]);
    assert_eq!(sha256_file(&ds.join("b.gls")), reference);
}

#[test]
fn exit_codes_distinguish_usage_runtime_and_wrong_answers() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 24, 2, 1, 8, 5);
    let dss = ds.to_str().unwrap();

    // Outputs exist but are not finalized: a broken run, not bad usage.
    let out = run(&["verify", "--data", dss]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr_text(&out).contains("not finalized"));

    // Streamed modes reject the from-scratch solver up front.
    let out = run(&[
        "solve",
        "--data",
        dss,
        "--algorithm",
        "blackbox",
        "--mode",
        "ooc-sync",
    ]);
    assert_eq!(exit_code(&out), 2);

    // Unknown flags are usage errors too.
    let out = run(&["solve", "--data", dss, "--no-such-flag"]);
    assert_eq!(exit_code(&out), 2);

    // Predictor cap applies at generation time.
    let big = tmp.path().join("big");
    let out = run(&[
        "gen",
        "--out",
        big.to_str().unwrap(),
        "--n",
        "32",
        "--l",
        "19",
        "--r",
        "2",
        "--m",
        "4",
    ]);
    assert_eq!(exit_code(&out), 2);

    // A wrong coefficient is found and reported as a verification failure.
    run_ok(&["solve", "--data", dss]);
    poke_f64(&ds.join("b.gls"), 48 + 8, 999.0);
    let out = run(&["verify", "--data", dss]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("exceed the tolerance"));
}

#[test]
fn non_spd_covariance_aborts_every_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 16, 2, 1, 6, 5);
    poke_f64(&ds.join("static.gls"), 48, -100.0);

    for mode in ["incore", "ooc-sync", "ooc-async"] {
        let out = run(&["solve", "--data", ds.to_str().unwrap(), "--mode", mode]);
        assert_eq!(exit_code(&out), 3, "mode {mode}");
        assert!(
            stderr_text(&out).contains("positive definite"),
            "mode {mode} must name the failure"
        );
    }
}

#[test]
fn truncated_panel_stream_aborts_and_names_the_block() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 16, 2, 1, 32, 5);
    // Keep the header plus 20 panels of the 32.
    let keep = 48 + 20 * 16 * 8;
    let f = std::fs::OpenOptions::new()
        .write(true)
        .open(ds.join("xr.gls"))
        .unwrap();
    f.set_len(keep as u64).unwrap();

    let out = run(&[
        "solve",
        "--data",
        ds.to_str().unwrap(),
        "--mode",
        "ooc-sync",
        "--block-size",
        "8",
    ]);
    assert_eq!(exit_code(&out), 3);
    let err = stderr_text(&out);
    assert!(err.contains("block"), "stderr was: {err}");
}

#[test]
fn solve_report_embeds_config_and_exact_flop_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 32, 3, 1, 16, 21);
    let report = tmp.path().join("rep.json");

    run_ok(&[
        "solve",
        "--data",
        ds.to_str().unwrap(),
        "--algorithm",
        "seqgls",
        "--report",
        report.to_str().unwrap(),
    ]);

    let text = std::fs::read_to_string(&report).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], "glsseq-report-v1");
    assert_eq!(v["algorithm"], "seqgls");
    assert_eq!(v["config"]["algorithm"], "seqgls");
    assert_eq!(v["measured"]["total"], v["predicted_flops"]);
    assert_eq!(v["predicted_gap"], 0.0);
    assert_eq!(v["rank_deficient"], 0);
    assert_eq!(v["m"], 16);
}

#[test]
fn bench_tabulates_all_four_solvers() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 24, 2, 1, 12, 2);
    let report = tmp.path().join("bench.csv");

    run_ok(&[
        "bench",
        "--data",
        ds.to_str().unwrap(),
        "--sweep",
        "algorithms",
        "--report",
        report.to_str().unwrap(),
        "--report-format",
        "csv",
    ]);

    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5, "header plus one row per solver:\n{text}");
    assert!(lines[0].starts_with("label,"));
    for alg in ["blackbox", "seqgls", "hpgwas", "gwfgls"] {
        assert!(text.contains(alg), "missing {alg} row");
    }
}

#[test]
fn dump_refuses_unfinalized_outputs_and_prints_finalized_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), 16, 1, 1, 5, 8);
    let dss = ds.to_str().unwrap();

    let out = run(&["dump", "--data", dss]);
    assert_eq!(exit_code(&out), 2);

    run_ok(&["solve", "--data", dss]);
    let out = run_ok(&["dump", "--data", dss]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("index,status,b0,b1\n"));
    assert_eq!(text.lines().count(), 6, "header plus five records");
}
