//! `CDEM` binary matrix files.
//!
//! Layout (little-endian):
//! - magic: `b"CDEM"`
//! - version: u32 (= 1)
//! - rows: u32
//! - cols: u32
//! - data: rows * cols IEEE-754 binary32, row-major

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"CDEM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Serializes `m` to CDEM bytes. Values are narrowed to `f32`.
pub fn encode(m: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Format("too many rows".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Format("too many columns".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in m.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidInput(format!(
                "value {v} is not representable as a finite f32"
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected CDEM".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "header declares {rows}x{cols} ({} floats) but payload holds {} bytes",
            rows * cols,
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in payload.chunks_exact(4) {
        let f = f32::from_le_bytes(chunk.try_into().unwrap());
        if !f.is_finite() {
            return Err(Error::Format("payload contains non-finite values".into()));
        }
        data.push(f as f64);
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn save_embeddings(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(m)?;
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&bytes)
}
