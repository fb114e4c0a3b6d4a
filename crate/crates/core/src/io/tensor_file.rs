//! Tensor container (`*.sxt`): magic `SXT\x01`, one dtype byte (0 = f32, 1 = f64), a
//! little-endian `u32` rank, `u64` dims, then the little-endian row-major data.

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::linalg::Tensor;

const MAGIC: &[u8; 4] = b"SXT\x01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

fn bad(msg: impl Into<String>) -> Error {
    FormatError::Tensor(msg.into()).into()
}

pub fn tensor_bytes(t: &Tensor, dtype: Dtype) -> Vec<u8> {
    let width = if dtype == Dtype::F32 { 4 } else { 8 };
    let mut out = Vec::with_capacity(9 + 8 * t.shape().len() + width * t.len());
    out.extend_from_slice(MAGIC);
    out.push(if dtype == Dtype::F32 { 0 } else { 1 });
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn read_tensor_bytes(bytes: &[u8]) -> Result<(Tensor, Dtype)> {
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(bad("missing SXT header"));
    }
    let dtype = match bytes[4] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        d => return Err(bad(format!("unknown dtype byte {d}"))),
    };
    let ndim = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let header = 9 + 8 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated shape"));
    }
    let shape: Vec<usize> = bytes[9..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("shape overflows"))?;
    let width = if dtype == Dtype::F32 { 4 } else { 8 };
    if (bytes.len() - header) as u128 != n as u128 * width as u128 {
        return Err(bad(format!(
            "payload has {} bytes, shape {shape:?} needs {}",
            bytes.len() - header,
            n * width
        )));
    }
    let payload = &bytes[header..];
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    let t = Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?;
    Ok((t, dtype))
}

pub fn write_tensor(path: &Path, t: &Tensor, dtype: Dtype) -> Result<()> {
    fs::write(path, tensor_bytes(t, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_tensor_bytes(&bytes).map(|(t, _)| t)
}
