//! The `VEM1` binary matrix container.
//!
//! ```text
//! offset  size  field
//! 0       4     ASCII "VEM1"
//! 4       1     dtype (0 = f32, 1 = f64)
//! 5       1     rank, always 2
//! 6       2     reserved, zero
//! 8       8     rows, u64 little-endian
//! 16      8     cols, u64 little-endian
//! 24      ...   row-major payload, little-endian
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{DenseMatrix, Dtype};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VEM1";
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Accept NaN/Inf entries (for masked data).
    pub allow_nonfinite: bool,
}

pub fn encode(m: &DenseMatrix) -> Vec<u8> {
    let dtype = m.dtype();
    let mut buf = Vec::with_capacity(HEADER_LEN + m.data().len() * dtype.size());
    buf.extend_from_slice(MAGIC);
    buf.push(dtype.code());
    buf.push(2);
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    match dtype {
        Dtype::F32 => {
            for &v in m.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in m.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    buf
}

pub fn decode(bytes: &[u8], path: &Path, opts: ReadOptions) -> Result<DenseMatrix> {
    let format = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(format("bad magic, expected \"VEM1\""));
        }
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("header truncated ({} bytes)", bytes.len()),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(format("bad magic, expected \"VEM1\""));
    }
    let dtype = Dtype::from_code(bytes[4]).ok_or_else(|| format("unknown dtype code"))?;
    if bytes[5] != 2 {
        return Err(format("rank must be 2"));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(format("reserved header bytes must be zero"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size() as u64))
        .ok_or_else(|| format("header dimensions overflow"))?;
    if payload.len() as u64 != expected {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!(
                "payload is {} bytes, header ({rows}x{cols}, {dtype:?}) requires {expected}",
                payload.len()
            ),
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let m = match dtype {
        Dtype::F32 => DenseMatrix::from_f32(
            rows,
            cols,
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        )?,
        Dtype::F64 => DenseMatrix::new(
            rows,
            cols,
            payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        )?,
    };
    if !opts.allow_nonfinite {
        m.check_finite()?;
    }
    Ok(m)
}

pub fn write_matrix(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(m)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_matrix_with(path, ReadOptions::default())
}

pub fn read_matrix_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes, path, opts)
}
