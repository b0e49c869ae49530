//! VFEB: a small little-endian container for named float32 matrices.
//!
//! ```text
//! offset  size          field
//! 0       4             magic "VFEB"
//! 4       2             version (u16, = 1)
//! 6       2             flags (u16, bit 0: rows are L2-normalized)
//! 8       8             rows (u64)
//! 16      8             cols (u64)
//! 24      4*rows*cols   f32 entries, row-major
//! ..      4             name block length in bytes (u32, 0 = no names)
//! ..      len           UTF-8 row names, each terminated by '\n'
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{DenseMatrix, EmbeddingMatrix};

pub const MAGIC: &[u8; 4] = b"VFEB";
pub const VERSION: u16 = 1;
pub const FLAG_NORMALIZED: u16 = 1;
const HEADER_LEN: usize = 24;

pub fn read_vfeb(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_vfeb(&bytes)
}

pub fn write_vfeb(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_vfeb(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_vfeb(matrix: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let m = matrix.matrix();
    if m.is_empty() {
        return Err(Error::EmptyMatrix {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let names = match matrix.names() {
        Some(names) => {
            let mut block = String::new();
            for name in names {
                if name.contains('\n') {
                    return Err(Error::InvalidName(name.clone()));
                }
                block.push_str(name);
                block.push('\n');
            }
            block.into_bytes()
        }
        None => Vec::new(),
    };
    let names_len = u32::try_from(names.len())
        .map_err(|_| Error::InvalidName(format!("name block of {} bytes", names.len())))?;

    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len() + 4 + names.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if matrix.is_normalized() {
        FLAG_NORMALIZED
    } else {
        0
    };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&names_len.to_le_bytes());
    out.extend_from_slice(&names);
    Ok(out)
}

pub fn decode_vfeb(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN as u64, bytes.len()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags & !FLAG_NORMALIZED != 0 {
        return Err(Error::UnsupportedFlags(flags));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix {
            rows: rows as usize,
            cols: cols as usize,
        });
    }
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .filter(|&n| n <= usize::MAX as u64)
        .ok_or(Error::TruncatedPayload {
            expected: u64::MAX,
            found: bytes.len() as u64,
        })?;
    let data_end = HEADER_LEN as u64 + payload;
    if (bytes.len() as u64) < data_end + 4 {
        return Err(truncated(data_end + 4, bytes.len()));
    }
    let data_end = data_end as usize;
    let (rows, cols) = (rows as usize, cols as usize);

    let data: Vec<f32> = bytes[HEADER_LEN..data_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let matrix = DenseMatrix::new(rows, cols, data)?;
    matrix.ensure_finite()?;

    let names_len = u32::from_le_bytes(bytes[data_end..data_end + 4].try_into().unwrap()) as usize;
    let names_start = data_end + 4;
    let names_end = names_start + names_len;
    if bytes.len() < names_end {
        return Err(truncated(names_end as u64, bytes.len()));
    }
    if bytes.len() > names_end {
        return Err(Error::TrailingData(bytes.len() - names_end));
    }
    let names = if names_len == 0 {
        None
    } else {
        let text =
            std::str::from_utf8(&bytes[names_start..names_end]).map_err(|_| Error::InvalidUtf8)?;
        let text = text.strip_suffix('\n').unwrap_or(text);
        let names: Vec<String> = text.split('\n').map(str::to_owned).collect();
        if names.len() != rows {
            return Err(Error::NameCountMismatch {
                rows,
                found: names.len(),
            });
        }
        Some(names)
    };
    EmbeddingMatrix::new(matrix, names, flags & FLAG_NORMALIZED != 0)
}

fn truncated(expected: u64, found: usize) -> Error {
    Error::TruncatedPayload {
        expected,
        found: found as u64,
    }
}
