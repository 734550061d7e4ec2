//! MNIST IDX files: big-endian magic, big-endian u32 dimensions, raw u8 payload.

use crate::error::{Error, Result};

pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxData {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxData {
    /// Pixel values scaled to `[0, 1]`.
    pub fn to_unit_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&b| b as f32 / 255.0).collect()
    }

    pub fn is_images(&self) -> bool {
        self.magic == IMAGE_MAGIC
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { offset: 0, needed: 4, available: bytes.len() });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let rank = match magic {
        LABEL_MAGIC => 1,
        IMAGE_MAGIC => 3,
        _ => {
            return Err(Error::BadMagic {
                expected: IMAGE_MAGIC.to_be_bytes().to_vec(),
                found: bytes[..4].to_vec(),
            })
        }
    };
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Truncated { offset: 4, needed: 4 * rank, available: bytes.len() - 4 });
    }
    let mut dims = Vec::with_capacity(rank);
    let mut len: usize = 1;
    for k in 0..rank {
        let d = u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        len = len
            .checked_mul(d)
            .ok_or_else(|| Error::DimensionOverflow(format!("IDX dimensions {dims:?} x {d} overflow")))?;
        dims.push(d);
    }
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(Error::Truncated { offset: header, needed: len, available: payload.len() });
    }
    if payload.len() > len {
        return Err(Error::Malformed(format!("{} trailing bytes after IDX payload", payload.len() - len)));
    }
    Ok(IdxData { magic, dims, data: payload.to_vec() })
}

pub fn serialize_idx(idx: &IdxData) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * idx.dims.len() + idx.data.len());
    out.extend_from_slice(&idx.magic.to_be_bytes());
    for &d in &idx.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&idx.data);
    out
}
