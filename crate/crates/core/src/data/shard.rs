//! Binary shard format for materialized video batches.
//!
//! ```text
//! "FSVD1"
//! u32 batch, u32 n_frames, u32 height, u32 width, u8 flags (bit 0: angles present)
//! u8 pixels[batch * n_frames * height * width]
//! u32 labels[batch]
//! f32 positions[batch * n_frames * 2]   (row, col)
//! f32 angles[batch * n_frames]          (only if flagged)
//! ```
//! Little-endian throughout. Pixels are stored as `round(255 * v)`.

use std::path::{Path, PathBuf};

use super::VideoBatch;
use crate::error::{Error, Result};
use crate::nn::FRAME;

pub const MAGIC: &[u8; 5] = b"FSVD1";
const HEADER: usize = 5 + 4 * 4 + 1;

pub fn encode_shard(b: &VideoBatch) -> Result<Vec<u8>> {
    b.validate()?;
    let count = b.batch * b.n_frames;
    let mut out = Vec::with_capacity(HEADER + count * FRAME * FRAME + 4 * b.batch + 12 * count);
    out.extend_from_slice(MAGIC);
    for d in [b.batch, b.n_frames, FRAME, FRAME] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(u8::from(!b.angles.is_empty()));
    out.extend(b.frames.iter().map(|&v| (v * 255.0).round() as u8));
    for &l in &b.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for p in &b.positions {
        out.extend_from_slice(&p[0].to_le_bytes());
        out.extend_from_slice(&p[1].to_le_bytes());
    }
    for a in &b.angles {
        out.extend_from_slice(&a.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_shard(buf: &[u8]) -> Result<VideoBatch> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC.to_vec(), found: buf[..buf.len().min(MAGIC.len())].to_vec() });
    }
    if buf.len() < HEADER {
        return Err(Error::Truncated { offset: MAGIC.len(), needed: HEADER, available: buf.len() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
    let (batch, n_frames, h, w) = (u32_at(5), u32_at(9), u32_at(13), u32_at(17));
    let flags = buf[21];
    if h != FRAME || w != FRAME {
        return Err(Error::Shape(format!("shard frames are {h}x{w}, expected {FRAME}x{FRAME}")));
    }
    if flags > 1 {
        return Err(Error::Malformed(format!("unknown shard flags {flags:#x}")));
    }
    let overflow = || Error::DimensionOverflow(format!("shard dims {batch}x{n_frames}"));
    let count = batch.checked_mul(n_frames).ok_or_else(overflow)?;
    let pixels = count.checked_mul(h * w).ok_or_else(overflow)?;
    let angle_bytes = if flags & 1 == 1 { count.checked_mul(4).ok_or_else(overflow)? } else { 0 };
    let need = pixels
        .checked_add(batch.checked_mul(4).ok_or_else(overflow)?)
        .and_then(|n| n.checked_add(count.checked_mul(8)?))
        .and_then(|n| n.checked_add(angle_bytes))
        .ok_or_else(overflow)?;
    let body = &buf[HEADER..];
    if body.len() < need {
        return Err(Error::Truncated { offset: HEADER, needed: need, available: body.len() });
    }
    if body.len() > need {
        return Err(Error::Malformed(format!("{} trailing bytes in shard", body.len() - need)));
    }
    let frames = body[..pixels].iter().map(|&b| b as f32 / 255.0).collect();
    let mut o = pixels;
    let labels = body[o..o + 4 * batch].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    o += 4 * batch;
    let f32s = |bytes: &[u8]| -> Vec<f32> { bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect() };
    let flat = f32s(&body[o..o + 8 * count]);
    o += 8 * count;
    let positions = flat.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
    let angles = f32s(&body[o..o + angle_bytes]);
    Ok(VideoBatch { batch, n_frames, frames, labels, positions, angles })
}

pub fn write_shard(b: &VideoBatch, path: &Path) -> Result<()> {
    std::fs::write(path, encode_shard(b)?)?;
    Ok(())
}

pub fn read_shard(path: &Path) -> Result<VideoBatch> {
    decode_shard(&std::fs::read(path)?)
}

fn shard_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("shard_{k:05}.fsvd"))
}

/// Write one shard file per batch into `dir`; returns the written paths.
pub fn write_shards(batches: &[VideoBatch], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    batches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let p = shard_path(dir, k);
            write_shard(b, &p)?;
            Ok(p)
        })
        .collect()
}

/// Read every `shard_*.fsvd` file in `dir` in index order.
pub fn read_shards(dir: &Path) -> Result<Vec<VideoBatch>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("shard_") && n.ends_with(".fsvd"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_shard(p)).collect()
}
