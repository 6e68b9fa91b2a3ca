//! On-disk layout: the fixed 48-byte header and the record geometry.
//!
//! All files share one header shape. Every multi-byte field is
//! little-endian; every float is an IEEE-754 binary64. Matrices are stored
//! column-major, exactly as they live in memory, so round trips are
//! byte-lossless and block offsets are pure arithmetic:
//!
//! | offset | bytes | content                                    |
//! |--------|-------|--------------------------------------------|
//! | 0      | 8     | magic `GLSSEQ01`                           |
//! | 8      | 8     | n (observations)                           |
//! | 16     | 8     | l (left design columns)                    |
//! | 24     | 8     | r (panel columns per problem)              |
//! | 32     | 8     | m (problems)                               |
//! | 40     | 8     | flags (bit 0: outputs valid)               |
//!
//! Panel `i` of the X_R stream starts at `48 + i*n*r*8`. Output record `i`
//! starts at `48 + i*(8 + p*8)` and holds a status word (0 ok,
//! 1 rank-deficient) followed by `p` coefficients.

use std::path::Path;

use crate::solvers::ProblemDims;

use super::StorageError;

pub const MAGIC: [u8; 8] = *b"GLSSEQ01";
pub const HEADER_LEN: usize = 48;

/// Flag bit 0: the file's records are complete and were finalized.
pub const FLAG_OUTPUTS_VALID: u64 = 1;

/// Status words of an output record.
pub const STATUS_OK: u64 = 0;
pub const STATUS_RANK_DEFICIENT: u64 = 1;

/// The common file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub n: u64,
    pub l: u64,
    pub r: u64,
    pub m: u64,
    pub flags: u64,
}

impl DatasetHeader {
    pub fn new(dims: &ProblemDims) -> Self {
        Self {
            n: dims.n as u64,
            l: dims.l as u64,
            r: dims.r as u64,
            m: dims.m as u64,
            flags: 0,
        }
    }

    pub fn dims(&self) -> ProblemDims {
        ProblemDims::new(
            self.n as usize,
            self.l as usize,
            self.r as usize,
            self.m as usize,
        )
    }

    /// Predictors per problem.
    pub fn p(&self) -> usize {
        (self.l + self.r) as usize
    }

    pub fn outputs_valid(&self) -> bool {
        self.flags & FLAG_OUTPUTS_VALID != 0
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..8].copy_from_slice(&MAGIC);
        out[8..16].copy_from_slice(&self.n.to_le_bytes());
        out[16..24].copy_from_slice(&self.l.to_le_bytes());
        out[24..32].copy_from_slice(&self.r.to_le_bytes());
        out[32..40].copy_from_slice(&self.m.to_le_bytes());
        out[40..48].copy_from_slice(&self.flags.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8; HEADER_LEN], path: &Path) -> Result<Self, StorageError> {
        if bytes[..8] != MAGIC {
            return Err(StorageError::BadMagic {
                path: path.display().to_string(),
            });
        }
        let word = |i: usize| {
            u64::from_le_bytes(bytes[8 * i..8 * (i + 1)].try_into().expect("fixed split"))
        };
        let header = Self {
            n: word(1),
            l: word(2),
            r: word(3),
            m: word(4),
            flags: word(5),
        };
        header
            .dims()
            .validate()
            .map_err(|e| StorageError::DimMismatch(format!("{}: {e}", path.display())))?;
        Ok(header)
    }
}

/// Byte offset of panel `i` in an X_R stream file.
pub fn panel_offset(header: &DatasetHeader, i: usize) -> u64 {
    HEADER_LEN as u64 + (i as u64) * header.n * header.r * 8
}

/// Bytes occupied by `count` consecutive panels.
pub fn panel_bytes(header: &DatasetHeader, count: usize) -> usize {
    (header.n * header.r) as usize * 8 * count
}

/// Bytes of one output record: status word plus `p` coefficients.
pub fn record_len(p: usize) -> usize {
    8 + 8 * p
}

/// Byte offset of output record `i`.
pub fn record_offset(header: &DatasetHeader, i: usize) -> u64 {
    HEADER_LEN as u64 + (i as u64) * record_len(header.p()) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_exactly_48_bytes_and_round_trips() {
        let dims = ProblemDims::new(100, 3, 2, 77);
        let mut h = DatasetHeader::new(&dims);
        h.flags = FLAG_OUTPUTS_VALID;
        let bytes = h.encode();
        assert_eq!(bytes.len(), 48);
        let back = DatasetHeader::decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.dims(), dims);
        assert!(back.outputs_valid());
    }

    #[test]
    fn decode_rejects_wrong_magic() {
        let mut bytes = DatasetHeader::new(&ProblemDims::new(10, 1, 1, 1)).encode();
        bytes[0] = b'X';
        assert!(matches!(
            DatasetHeader::decode(&bytes, Path::new("mem")),
            Err(StorageError::BadMagic { .. })
        ));
    }

    #[test]
    fn decode_rejects_invalid_dims() {
        // p = n violates the n > p requirement.
        let mut h = DatasetHeader::new(&ProblemDims::new(10, 1, 1, 1));
        h.n = 2;
        let bytes = h.encode();
        assert!(matches!(
            DatasetHeader::decode(&bytes, Path::new("mem")),
            Err(StorageError::DimMismatch(_))
        ));
    }

    #[test]
    fn offsets_follow_the_layout_table() {
        let h = DatasetHeader::new(&ProblemDims::new(100, 3, 2, 50));
        assert_eq!(panel_offset(&h, 0), 48);
        assert_eq!(panel_offset(&h, 3), 48 + 3 * 100 * 2 * 8);
        assert_eq!(record_len(5), 48);
        assert_eq!(record_offset(&h, 7), 48 + 7 * (8 + 5 * 8));
    }
}
