//! Checkpoint file format.
//!
//! ```text
//! "FSVAE1"
//! u32 tensor count
//! per tensor: u32 name length, name (UTF-8), u8 dtype code, u32 rank,
//!             u64 dims[rank], f64 data[prod(dims)]
//! u64 text length, canonical key-sorted key=value text
//! ```
//! All integers and floats are little-endian. Network values are widened to
//! f64 on write, so f32 models round-trip exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, KvMap};
use crate::real::Real;

use super::model::Model;

pub const MAGIC: &[u8; 6] = b"FSVAE1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dtype: u8,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialized network parameters, batch-norm statistics, optimizer state and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub meta: KvMap,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated { offset: self.pos, needed: n, available: self.buf.len() - self.pos });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dtype);
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let text = kv::render(&self.meta);
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(MAGIC.len()).map_err(|_| Error::BadMagic {
            expected: MAGIC.to_vec(),
            found: buf[..buf.len().min(MAGIC.len())].to_vec(),
        })?;
        if magic != MAGIC {
            return Err(Error::BadMagic { expected: MAGIC.to_vec(), found: magic.to_vec() });
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.u8()?;
            if dtype != f32::DTYPE_CODE && dtype != f64::DTYPE_CODE {
                return Err(Error::Malformed(format!("tensor {name}: unknown dtype code {dtype}")));
            }
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::DimensionOverflow(format!("tensor {name}: rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            let mut len: usize = 1;
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?)
                    .map_err(|_| Error::DimensionOverflow(format!("tensor {name}: dimension exceeds usize")))?;
                len = len
                    .checked_mul(d)
                    .ok_or_else(|| Error::DimensionOverflow(format!("tensor {name}: element count overflows")))?;
                dims.push(d);
            }
            let bytes = len
                .checked_mul(8)
                .ok_or_else(|| Error::DimensionOverflow(format!("tensor {name}: byte count overflows")))?;
            if bytes > r.remaining() {
                return Err(Error::Truncated { offset: r.pos, needed: bytes, available: r.remaining() });
            }
            let data = r.take(bytes)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(NamedTensor { name, dtype, dims, data });
        }
        let text_len = usize::try_from(r.u64()?)
            .map_err(|_| Error::DimensionOverflow("metadata length exceeds usize".into()))?;
        let text = std::str::from_utf8(r.take(text_len)?).map_err(|_| Error::Malformed("metadata is not UTF-8".into()))?;
        let meta = kv::parse(text)?;
        if r.remaining() != 0 {
            return Err(Error::Malformed(format!("{} trailing bytes after metadata", r.remaining())));
        }
        Ok(Checkpoint { tensors, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Parameters and batch-norm statistics of `model`, in model order.
    pub fn model_tensors<T: Real>(model: &Model<T>) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (name, p) in model.named_params() {
            out.push(NamedTensor {
                name,
                dtype: T::DTYPE_CODE,
                dims: p.dims.clone(),
                data: p.value.iter().map(|v| v.to_f64()).collect(),
            });
        }
        for (name, b) in model.named_buffers() {
            out.push(NamedTensor {
                name,
                dtype: T::DTYPE_CODE,
                dims: vec![b.value.len()],
                data: b.value.iter().map(|v| v.to_f64()).collect(),
            });
        }
        out
    }

    /// Copy stored parameters and statistics into a model of matching shape.
    pub fn restore_model<T: Real>(&self, model: &mut Model<T>) -> Result<()> {
        for (name, p) in model.named_params_mut() {
            let t = self.tensor(&name).ok_or_else(|| Error::Malformed(format!("checkpoint lacks {name}")))?;
            if t.dims != p.dims {
                return Err(Error::Shape(format!("{name}: checkpoint dims {:?}, model {:?}", t.dims, p.dims)));
            }
            p.value = t.data.iter().map(|&v| T::from_f64(v)).collect();
        }
        for (name, b) in model.named_buffers_mut() {
            let t = self.tensor(&name).ok_or_else(|| Error::Malformed(format!("checkpoint lacks {name}")))?;
            if t.data.len() != b.value.len() {
                return Err(Error::Shape(format!("{name}: checkpoint has {} values, model {}", t.data.len(), b.value.len())));
            }
            b.value = t.data.iter().map(|&v| T::from_f64(v)).collect();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::NetConfig;
    use crate::nn::Mode;

    fn sample() -> Checkpoint {
        let mut meta = KvMap::new();
        meta.insert("b".into(), "2".into());
        meta.insert("a".into(), "x".into());
        Checkpoint {
            tensors: vec![
                NamedTensor { name: "w".into(), dtype: 2, dims: vec![2, 3], data: vec![1.0, -2.5, 0.1, 3e-300, f64::MIN_POSITIVE, 7.0] },
                NamedTensor { name: "s".into(), dtype: 1, dims: vec![], data: vec![0.5] },
            ],
            meta,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::BadMagic { .. })));
        assert!(Checkpoint::from_bytes(b"FSV").is_err());
    }

    #[test]
    fn huge_dims_do_not_allocate() {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        b.push(b'w');
        b.push(2);
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&u64::MAX.to_le_bytes());
        b.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::DimensionOverflow(_))));
    }

    #[test]
    fn model_restore_gives_identical_posteriors() {
        let cfg = NetConfig { stage_channels: [2, 2, 2, 2], hidden: 4, latent: 2 };
        let mut a = Model::<f32>::new(cfg.clone(), 1).unwrap();
        let frames: Vec<f32> = (0..2 * 64 * 64).map(|i| ((i * 31) % 17) as f32 / 17.0).collect();
        // move running statistics away from their defaults
        a.encode(&frames, 1, 2, Mode::Train).unwrap();
        let ck = Checkpoint { tensors: Checkpoint::model_tensors(&a), meta: KvMap::new() };
        let ck = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        let mut b = Model::<f32>::new(cfg, 2).unwrap();
        ck.restore_model(&mut b).unwrap();
        let pa = a.encode(&frames, 1, 2, Mode::Infer).unwrap();
        let pb = b.encode(&frames, 1, 2, Mode::Infer).unwrap();
        assert_eq!(pa, pb);
    }
}
