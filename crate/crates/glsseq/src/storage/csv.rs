//! Debug export of an output file as CSV.

use std::io::Write;

use crate::solvers::SolveStatus;

use super::files::BlockReader;
use super::StorageError;

/// Refuse to dump anything larger than this; the exporter is a debugging
/// aid, not a bulk format.
pub const CSV_DUMP_LIMIT: usize = 10_000;

/// Writes `index,status,b0,...,b{p-1}` rows. Sentinel coefficients print as
/// `NaN`. Requires a finalized file.
pub fn dump_records_csv(
    reader: &mut BlockReader,
    out: &mut impl Write,
) -> Result<(), StorageError> {
    let m = reader.header().m as usize;
    if m > CSV_DUMP_LIMIT {
        return Err(StorageError::InvalidArgument(format!(
            "{m} records exceed the CSV dump limit of {CSV_DUMP_LIMIT}"
        )));
    }
    if !reader.outputs_valid() {
        return Err(StorageError::InvalidArgument(
            "output file was never finalized; records are not trustworthy".into(),
        ));
    }
    let p = reader.header().p();
    let io = |e: std::io::Error| StorageError::Io {
        path: "<csv output>".into(),
        source: e,
    };
    write!(out, "index,status").map_err(io)?;
    for j in 0..p {
        write!(out, ",b{j}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for rec in reader.read_all()? {
        let status = match rec.status {
            SolveStatus::Ok => "ok",
            SolveStatus::RankDeficient => "rank_deficient",
        };
        write!(out, "{},{status}", rec.index).map_err(io)?;
        for v in &rec.b {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}
