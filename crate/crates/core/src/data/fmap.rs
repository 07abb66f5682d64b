//! FMAP: a little-endian single-tensor container.
//!
//! ```text
//! 0..4   magic "FMAP"
//! 4      version (1)
//! 5      dtype   (1 = f32)
//! 6      rank    (1..=3)
//! 7      zero padding
//! 8..    rank × u32 dimensions, then product(dims) × f32 payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{DecodeError, Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"FMAP";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
const FIXED_HEADER: usize = 8;

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED_HEADER + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F32, t.rank() as u8, 0]);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one tensor from the front of `bytes`, returning it together with
/// the number of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Tensor, usize), DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::TruncatedHeader(bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(DecodeError::TruncatedHeader(bytes.len()));
    }
    if bytes[4] != VERSION {
        return Err(DecodeError::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(DecodeError::UnsupportedDtype(bytes[5]));
    }
    let rank = bytes[6];
    if !(1..=3).contains(&rank) {
        return Err(DecodeError::UnsupportedRank(rank));
    }
    let dims_end = FIXED_HEADER + 4 * rank as usize;
    if bytes.len() < dims_end {
        return Err(DecodeError::TruncatedHeader(bytes.len()));
    }
    let dims: Vec<u32> = bytes[FIXED_HEADER..dims_end]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("chunk of 4")))
        .collect();
    if dims.contains(&0) {
        return Err(DecodeError::ZeroDimension(dims));
    }
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_mul(4))
        .filter(|&b| b <= isize::MAX as usize)
        .ok_or_else(|| DecodeError::DimensionOverflow(dims.clone()))?;
    let available = bytes.len() - dims_end;
    if available < payload {
        return Err(DecodeError::TruncatedPayload {
            expected: payload,
            found: available,
        });
    }
    let data: Vec<f32> = bytes[dims_end..dims_end + payload]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("chunk of 4")))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(DecodeError::NonFinite(i));
    }
    let shape: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
    let t = Tensor::new(&shape, data).map_err(|e| DecodeError::Checkpoint(e.to_string()))?;
    Ok((t, dims_end + payload))
}

/// Decodes a buffer holding exactly one tensor.
pub fn decode(bytes: &[u8]) -> Result<Tensor, DecodeError> {
    let (t, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes {
            extra: bytes.len() - used,
        });
    }
    Ok(t)
}

pub fn write_file(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&bytes)?)
}
