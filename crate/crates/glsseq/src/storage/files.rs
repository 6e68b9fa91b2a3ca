//! File access: the static inputs, the panel stream, and the output records.
//!
//! Three files make a dataset. The static file holds everything every
//! problem shares (M as a full square, X_L, y) and is read whole. The panel
//! stream holds the m panels back to back and is read in caller-chosen
//! block ranges. The output file is preallocated at creation and filled by
//! positional block writes in any order; `finalize` sets the outputs-valid
//! flag only once every record has been written, so a crash mid-run leaves
//! a file that readers refuse to trust.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::kernels::{DenseMatrix, SymmetricMatrix};
use crate::solvers::{SolutionRecord, SolveStatus};

use super::format::{
    panel_bytes, panel_offset, record_len, record_offset, DatasetHeader, FLAG_OUTPUTS_VALID,
    HEADER_LEN, STATUS_OK, STATUS_RANK_DEFICIENT,
};
use super::{StorageError, NAN_SENTINEL_BITS};

/// Canonical file names inside a dataset directory.
pub const STATIC_FILE_NAME: &str = "static.gls";
pub const XR_FILE_NAME: &str = "xr.gls";
pub const B_FILE_NAME: &str = "b.gls";

/// The three files of one dataset.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub static_file: PathBuf,
    pub xr_file: PathBuf,
    pub b_file: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            static_file: dir.join(STATIC_FILE_NAME),
            xr_file: dir.join(XR_FILE_NAME),
            b_file: dir.join(B_FILE_NAME),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> StorageError {
    StorageError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn truncated(path: &Path, section: impl Into<String>) -> StorageError {
    StorageError::TruncatedFile {
        path: path.display().to_string(),
        section: section.into(),
    }
}

/// Writes `values` as consecutive little-endian f64 words.
fn write_f64s(w: &mut impl Write, values: &[f64], path: &Path) -> Result<(), StorageError> {
    let mut buf = [0u8; 8192];
    for chunk in values.chunks(buf.len() / 8) {
        for (slot, v) in buf.chunks_exact_mut(8).zip(chunk) {
            slot.copy_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf[..chunk.len() * 8])
            .map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Fills `dest` from consecutive little-endian f64 words. A short read maps
/// to `TruncatedFile` naming `section`.
fn read_f64s_into(
    r: &mut impl Read,
    dest: &mut [f64],
    path: &Path,
    section: &str,
) -> Result<(), StorageError> {
    let mut buf = [0u8; 65536];
    let mut filled = 0usize;
    while filled < dest.len() {
        let want = ((dest.len() - filled) * 8).min(buf.len());
        r.read_exact(&mut buf[..want]).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                truncated(path, section)
            } else {
                io_err(path, e)
            }
        })?;
        for (i, chunk) in buf[..want].chunks_exact(8).enumerate() {
            dest[filled + i] = f64::from_le_bytes(chunk.try_into().expect("fixed split"));
        }
        filled += want / 8;
    }
    Ok(())
}

fn read_header(file: &mut impl Read, path: &Path) -> Result<DatasetHeader, StorageError> {
    let mut bytes = [0u8; HEADER_LEN];
    file.read_exact(&mut bytes).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            truncated(path, "header")
        } else {
            io_err(path, e)
        }
    })?;
    DatasetHeader::decode(&bytes, path)
}

/// The shared inputs of a dataset, read whole.
#[derive(Debug, Clone)]
pub struct StaticData {
    pub header: DatasetHeader,
    pub cov: SymmetricMatrix,
    pub xl: DenseMatrix,
    pub y: Vec<f64>,
}

/// Writes the static file: header, M (full n-by-n), X_L, y.
pub fn write_static(
    path: &Path,
    header: &DatasetHeader,
    cov: &SymmetricMatrix,
    xl: &DenseMatrix,
    y: &[f64],
) -> Result<(), StorageError> {
    let n = header.n as usize;
    let l = header.l as usize;
    assert_eq!(cov.dim(), n, "covariance dimension");
    assert_eq!((xl.rows(), xl.cols()), (n, l), "left design shape");
    assert_eq!(y.len(), n, "response length");
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    w.write_all(&header.encode()).map_err(|e| io_err(path, e))?;
    write_f64s(&mut w, cov.to_dense().as_slice(), path)?;
    write_f64s(&mut w, xl.as_slice(), path)?;
    write_f64s(&mut w, y, path)?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads the whole static file. Short sections report which part is missing.
pub fn read_static(path: &Path) -> Result<StaticData, StorageError> {
    let mut r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let header = read_header(&mut r, path)?;
    let n = header.n as usize;
    let l = header.l as usize;
    let mut cov = vec![0.0; n * n];
    read_f64s_into(&mut r, &mut cov, path, "covariance")?;
    let mut xl = vec![0.0; n * l];
    read_f64s_into(&mut r, &mut xl, path, "x_l")?;
    let mut y = vec![0.0; n];
    read_f64s_into(&mut r, &mut y, path, "y")?;
    Ok(StaticData {
        header,
        cov: SymmetricMatrix::from_column_major(n, cov),
        xl: DenseMatrix::from_column_major(n, l, xl),
        y,
    })
}

/// Sequential writer for the panel stream, used by the generator.
pub struct XrWriter {
    w: BufWriter<File>,
    path: PathBuf,
    header: DatasetHeader,
    written: usize,
}

impl XrWriter {
    pub fn create(path: &Path, header: &DatasetHeader) -> Result<Self, StorageError> {
        let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
        w.write_all(&header.encode()).map_err(|e| io_err(path, e))?;
        Ok(Self {
            w,
            path: path.to_path_buf(),
            header: *header,
            written: 0,
        })
    }

    /// Appends whole panels; `values` must be a multiple of n*r floats.
    pub fn append_panels(&mut self, values: &[f64]) -> Result<(), StorageError> {
        let per = (self.header.n * self.header.r) as usize;
        assert_eq!(values.len() % per, 0, "whole panels only");
        let count = values.len() / per;
        if self.written + count > self.header.m as usize {
            return Err(StorageError::OutOfRange {
                first: self.written,
                count,
                m: self.header.m as usize,
            });
        }
        write_f64s(&mut self.w, values, &self.path)?;
        self.written += count;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), StorageError> {
        if self.written != self.header.m as usize {
            return Err(StorageError::Incomplete {
                missing: format!(
                    "panels [{}, {}) were never written",
                    self.written, self.header.m
                ),
            });
        }
        self.w.flush().map_err(|e| io_err(&self.path, e))
    }
}

/// Random-access reader for the panel stream.
pub struct XrReader {
    file: File,
    path: PathBuf,
    header: DatasetHeader,
}

impl XrReader {
    pub fn open(path: &Path) -> Result<Self, StorageError> {
        let mut file = File::open(path).map_err(|e| io_err(path, e))?;
        let header = read_header(&mut file, path)?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            header,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    /// Reads panels `[first, first+count)` into `dest`, resizing it to
    /// exactly `count * n * r` floats. A short file reports the block range
    /// that could not be read.
    pub fn read_block_into(
        &mut self,
        first: usize,
        count: usize,
        dest: &mut Vec<f64>,
    ) -> Result<(), StorageError> {
        let m = self.header.m as usize;
        if count == 0 || first + count > m {
            return Err(StorageError::OutOfRange { first, count, m });
        }
        dest.clear();
        dest.resize(panel_bytes(&self.header, count) / 8, 0.0);
        self.file
            .seek(SeekFrom::Start(panel_offset(&self.header, first)))
            .map_err(|e| io_err(&self.path, e))?;
        let section = format!("panel block [{first}, {})", first + count);
        read_f64s_into(&mut self.file, dest, &self.path, &section)
    }

    /// Convenience wrapper: the block as one n-by-(count*r) matrix.
    pub fn read_block(&mut self, first: usize, count: usize) -> Result<DenseMatrix, StorageError> {
        let mut data = Vec::new();
        self.read_block_into(first, count, &mut data)?;
        Ok(DenseMatrix::from_column_major(
            self.header.n as usize,
            count * self.header.r as usize,
            data,
        ))
    }
}

/// Sorted disjoint half-open spans; tracks which records have been written.
#[derive(Debug, Default)]
struct Coverage {
    spans: Vec<(usize, usize)>,
}

impl Coverage {
    fn add(&mut self, first: usize, count: usize) {
        let (mut lo, mut hi) = (first, first + count);
        let mut merged = Vec::with_capacity(self.spans.len() + 1);
        for &(a, b) in &self.spans {
            if b < lo || a > hi {
                merged.push((a, b));
            } else {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        merged.push((lo, hi));
        merged.sort_unstable();
        self.spans = merged;
    }

    fn missing(&self, m: usize) -> Option<String> {
        if self.spans.len() == 1 && self.spans[0] == (0, m) {
            return None;
        }
        let mut gaps = Vec::new();
        let mut cursor = 0;
        for &(a, b) in &self.spans {
            if a > cursor {
                gaps.push(format!("[{cursor}, {a})"));
            }
            cursor = b;
        }
        if cursor < m {
            gaps.push(format!("[{cursor}, {m})"));
        }
        Some(format!("records {} were never written", gaps.join(", ")))
    }
}

/// Positional writer for the output file.
///
/// Creation writes the header with the outputs-valid flag clear and extends
/// the file to its final size, so blocks can land in any order. `finalize`
/// flips the flag only when the coverage spans every record.
pub struct BlockWriter {
    file: File,
    path: PathBuf,
    header: DatasetHeader,
    coverage: Coverage,
}

impl BlockWriter {
    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn create(path: &Path, header: &DatasetHeader) -> Result<Self, StorageError> {
        let mut header = *header;
        header.flags &= !FLAG_OUTPUTS_VALID;
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        file.write_all(&header.encode())
            .map_err(|e| io_err(path, e))?;
        let total = record_offset(&header, header.m as usize);
        file.set_len(total).map_err(|e| io_err(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            header,
            coverage: Coverage::default(),
        })
    }

    /// Writes records `[first, first+records.len())` in one positional write.
    /// Record indices must match their slots. Rank-deficient coefficients are
    /// canonicalized to the quiet-NaN sentinel so the bytes never depend on
    /// whatever the solver left behind.
    pub fn write_block(
        &mut self,
        first: usize,
        records: &[SolutionRecord],
    ) -> Result<(), StorageError> {
        let m = self.header.m as usize;
        let p = self.header.p();
        if records.is_empty() || first + records.len() > m {
            return Err(StorageError::OutOfRange {
                first,
                count: records.len(),
                m,
            });
        }
        let mut buf = Vec::with_capacity(records.len() * record_len(p));
        for (offset, rec) in records.iter().enumerate() {
            if rec.index != first + offset {
                return Err(StorageError::DimMismatch(format!(
                    "record index {} in slot {}",
                    rec.index,
                    first + offset
                )));
            }
            if rec.b.len() != p {
                return Err(StorageError::DimMismatch(format!(
                    "record {} has {} coefficients, file stores {p}",
                    rec.index,
                    rec.b.len()
                )));
            }
            match rec.status {
                SolveStatus::Ok => {
                    buf.extend_from_slice(&STATUS_OK.to_le_bytes());
                    for v in &rec.b {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
                SolveStatus::RankDeficient => {
                    buf.extend_from_slice(&STATUS_RANK_DEFICIENT.to_le_bytes());
                    for _ in 0..p {
                        buf.extend_from_slice(&NAN_SENTINEL_BITS.to_le_bytes());
                    }
                }
            }
        }
        self.file
            .seek(SeekFrom::Start(record_offset(&self.header, first)))
            .map_err(|e| io_err(&self.path, e))?;
        self.file
            .write_all(&buf)
            .map_err(|e| io_err(&self.path, e))?;
        self.coverage.add(first, records.len());
        Ok(())
    }

    /// Sets the outputs-valid flag. Fails, leaving the flag clear, if any
    /// record range was never written.
    pub fn finalize(mut self) -> Result<(), StorageError> {
        if let Some(missing) = self.coverage.missing(self.header.m as usize) {
            return Err(StorageError::Incomplete { missing });
        }
        self.header.flags |= FLAG_OUTPUTS_VALID;
        self.file
            .seek(SeekFrom::Start(0))
            .map_err(|e| io_err(&self.path, e))?;
        self.file
            .write_all(&self.header.encode())
            .map_err(|e| io_err(&self.path, e))?;
        self.file.sync_all().map_err(|e| io_err(&self.path, e))
    }
}

/// Reader for the output file.
pub struct BlockReader {
    file: File,
    path: PathBuf,
    header: DatasetHeader,
}

impl BlockReader {
    pub fn open(path: &Path) -> Result<Self, StorageError> {
        let mut file = File::open(path).map_err(|e| io_err(path, e))?;
        let header = read_header(&mut file, path)?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            header,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn outputs_valid(&self) -> bool {
        self.header.outputs_valid()
    }

    /// Reads records `[first, first+count)`.
    pub fn read_records(
        &mut self,
        first: usize,
        count: usize,
    ) -> Result<Vec<SolutionRecord>, StorageError> {
        let m = self.header.m as usize;
        let p = self.header.p();
        if count == 0 || first + count > m {
            return Err(StorageError::OutOfRange { first, count, m });
        }
        self.file
            .seek(SeekFrom::Start(record_offset(&self.header, first)))
            .map_err(|e| io_err(&self.path, e))?;
        let mut bytes = vec![0u8; count * record_len(p)];
        self.file.read_exact(&mut bytes).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                truncated(
                    &self.path,
                    format!("record block [{first}, {})", first + count),
                )
            } else {
                io_err(&self.path, e)
            }
        })?;
        let mut out = Vec::with_capacity(count);
        for (offset, rec) in bytes.chunks_exact(record_len(p)).enumerate() {
            let index = first + offset;
            let status_word = u64::from_le_bytes(rec[..8].try_into().expect("fixed split"));
            let status = match status_word {
                STATUS_OK => SolveStatus::Ok,
                STATUS_RANK_DEFICIENT => SolveStatus::RankDeficient,
                other => {
                    return Err(StorageError::BadStatus {
                        index,
                        value: other,
                    })
                }
            };
            let b = rec[8..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("fixed split")))
                .collect();
            out.push(SolutionRecord { index, status, b });
        }
        Ok(out)
    }

    pub fn read_all(&mut self) -> Result<Vec<SolutionRecord>, StorageError> {
        self.read_records(0, self.header.m as usize)
    }
}
