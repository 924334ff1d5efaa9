//! Shared codec for the little-endian float32 tensor files (NPFX, NPTR, NPEM):
//! an 8-byte magic, a fixed number of u64 dimensions, then the row-major payload.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MAGIC_LEN: usize = 8;

pub struct Tensor {
    pub dims: Vec<u64>,
    pub values: Vec<f32>,
}

pub fn encode(magic: &[u8; 8], dims: &[u64], values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(MAGIC_LEN + 8 * dims.len());
    buf.extend_from_slice(magic);
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8], magic: &[u8; 8], ndims: usize, path: &Path) -> Result<Tensor> {
    let header = MAGIC_LEN + 8 * ndims;
    if bytes.len() < header {
        return Err(Error::format(path, "file shorter than its header"));
    }
    if &bytes[..MAGIC_LEN] != magic {
        return Err(Error::format(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..MAGIC_LEN]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let dims: Vec<u64> = (0..ndims)
        .map(|i| {
            let at = MAGIC_LEN + 8 * i;
            u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
        })
        .collect();
    let count = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    let payload = &bytes[header..];
    if payload.len() as u64 != count {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes but header {:?} implies {}",
                payload.len(),
                dims,
                count
            ),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor { dims, values })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::read(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// `<file>.meta.json` next to a tensor file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}
