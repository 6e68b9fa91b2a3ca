//! Machine-readable reports: every run echoes its configuration so the
//! result is reproducible from the report alone.

use std::collections::BTreeMap;
use std::path::Path;

use glsseq::kernels::FlopCounter;
use glsseq::streaming::OverlapReport;
use serde::Serialize;

pub const REPORT_SCHEMA: &str = "glsseq-report-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Flop totals in report form.
#[derive(Debug, Clone, Serialize)]
pub struct FlopSummary {
    pub total: u64,
    pub matrix_matrix: u64,
    pub matrix_vector: u64,
    pub matrix_matrix_share: f64,
    pub by_kernel: BTreeMap<String, u64>,
}

impl FlopSummary {
    pub fn from_counter(c: &FlopCounter) -> Self {
        Self {
            total: c.total(),
            matrix_matrix: c.matrix_matrix_total(),
            matrix_vector: c.matrix_vector_total(),
            matrix_matrix_share: c.matrix_matrix_share(),
            by_kernel: c
                .breakdown()
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub schema: &'static str,
    pub config: serde_json::Value,
    pub n: usize,
    pub l: usize,
    pub r: usize,
    pub m: usize,
    pub algorithm: String,
    pub mode: String,
    pub workers: usize,
    /// Steady-state panels per block; 0 for in-core runs.
    pub block_size: usize,
    pub warmup: usize,
    pub wall_s: f64,
    pub gflops: f64,
    pub measured: FlopSummary,
    pub predicted_flops: u64,
    /// |measured - predicted| / predicted.
    pub predicted_gap: f64,
    pub records_written: usize,
    pub rank_deficient: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapReport>,
}

impl SolveReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "algorithm,mode,n,l,r,m,workers,block_size,wall_s,gflops,\
             measured_flops,predicted_flops,predicted_gap,mm_share,rank_deficient\n",
        );
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.6},{:.3},{},{},{:.6},{:.6},{}\n",
            self.algorithm,
            self.mode,
            self.n,
            self.l,
            self.r,
            self.m,
            self.workers,
            self.block_size,
            self.wall_s,
            self.gflops,
            self.measured.total,
            self.predicted_flops,
            self.predicted_gap,
            self.measured.matrix_matrix_share,
            self.rank_deficient,
        ));
        out
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub config: serde_json::Value,
    pub problems: usize,
    pub rank_deficient: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Up to the first 16 failing problem indices.
    pub failing: Vec<usize>,
}

impl VerifyReport {
    pub fn csv(&self) -> String {
        format!(
            "problems,rank_deficient,max_rel_err,tolerance,pass\n{},{},{:.3e},{:.3e},{}\n",
            self.problems, self.rank_deficient, self.max_rel_err, self.tolerance, self.pass
        )
    }
}

/// One measured configuration in a sweep. Keys are uniform within a sweep,
/// so the rows tabulate cleanly.
#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub label: String,
    #[serde(flatten)]
    pub values: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub schema: &'static str,
    pub config: serde_json::Value,
    pub sweep: String,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.rows.first() else {
            return out;
        };
        out.push_str("label");
        for key in first.values.keys() {
            out.push(',');
            out.push_str(key);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.label);
            for value in row.values.values() {
                out.push_str(&format!(",{value}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Writes a report file in the requested format.
pub fn write_report<T: Serialize>(
    report: &T,
    csv: impl FnOnce(&T) -> String,
    path: &Path,
    format: ReportFormat,
) -> std::io::Result<()> {
    let text = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => csv(report),
    };
    std::fs::write(path, text)
}

/// Serializes the parsed arguments for embedding into a report.
pub fn config_echo<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}
