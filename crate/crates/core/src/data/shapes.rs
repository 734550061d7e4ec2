//! Rotating shapes: a centered shape mask rotated in-plane at constant angular
//! velocity. Shape identity is static, orientation is temporal.

use std::f64::consts::TAU;

use rand::Rng;

use super::glyphs::quantize;
use super::VideoBatch;
use crate::error::{Error, Result};
use crate::nn::FRAME;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeConfig {
    /// Radians per frame.
    pub omega: f64,
    pub n_frames: usize,
    pub train_ids: Vec<u32>,
    pub held_out_ids: Vec<u32>,
    /// Seed of the shape library (which polygon each id denotes).
    pub library_seed: u64,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            omega: TAU / 24.0,
            n_frames: 16,
            train_ids: (0..40).collect(),
            held_out_ids: (1000..1010).collect(),
            library_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeSplit {
    Train,
    HeldOut,
}

impl ShapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::Config("n_frames must be positive".into()));
        }
        if self.train_ids.iter().any(|id| self.held_out_ids.contains(id)) {
            return Err(Error::Config("held-out shape ids overlap training ids".into()));
        }
        Ok(())
    }

    pub fn ids(&self, split: ShapeSplit) -> &[u32] {
        match split {
            ShapeSplit::Train => &self.train_ids,
            ShapeSplit::HeldOut => &self.held_out_ids,
        }
    }
}

/// Binary `64x64` mask of shape `id`: a star-shaped polygon with 3-8 vertices.
pub fn shape_mask(id: u32, library_seed: u64) -> Vec<f32> {
    let mut r = rng::stream(library_seed, &[tag::SHAPES, id as u64]);
    let k = r.random_range(3..=8usize);
    let regular = r.random_bool(0.3);
    let phase = r.random_range(0.0..TAU);
    let verts: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let jitter = if regular { 0.0 } else { r.random_range(-0.35..0.35) };
            let a = phase + TAU * (i as f64 + jitter) / k as f64;
            let rad = if regular { 22.0 } else { r.random_range(11.0..24.0) };
            let c = (FRAME as f64 - 1.0) / 2.0;
            (c + rad * a.cos(), c + rad * a.sin())
        })
        .collect();
    let mut mask = vec![0f32; FRAME * FRAME];
    for y in 0..FRAME {
        for x in 0..FRAME {
            if inside(&verts, (x as f64, y as f64)) {
                mask[y * FRAME + x] = 1.0;
            }
        }
    }
    mask
}

fn inside(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            hit = !hit;
        }
        j = i;
    }
    hit
}

/// Rotate `mask` by `angle` about the frame center with bilinear resampling.
pub fn rotate(mask: &[f32], angle: f64) -> Vec<f32> {
    let c = (FRAME as f64 - 1.0) / 2.0;
    let (s, co) = angle.sin_cos();
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= FRAME as isize || y >= FRAME as isize {
            0.0
        } else {
            mask[y as usize * FRAME + x as usize] as f64
        }
    };
    let mut out = vec![0f32; FRAME * FRAME];
    for y in 0..FRAME {
        for x in 0..FRAME {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            // inverse rotation maps output pixels back into the mask
            let sx = co * dx + s * dy + c;
            let sy = -s * dx + co * dy + c;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = at(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + at(x0 + 1, y0) * fx * (1.0 - fy)
                + at(x0, y0 + 1) * (1.0 - fx) * fy
                + at(x0 + 1, y0 + 1) * fx * fy;
            out[y * FRAME + x] = quantize(v);
        }
    }
    out
}

/// Generate `batch` rotating-shape videos from the chosen id pool.
pub fn gen_rotating_shapes(cfg: &ShapeConfig, split: ShapeSplit, batch: usize, seed: u64) -> Result<VideoBatch> {
    cfg.validate()?;
    let ids = cfg.ids(split);
    if ids.is_empty() {
        return Err(Error::Config("shape library is empty".into()));
    }
    let n = cfg.n_frames;
    let px = FRAME * FRAME;
    let mut out = VideoBatch {
        batch,
        n_frames: n,
        frames: Vec::with_capacity(batch * n * px),
        labels: Vec::with_capacity(batch),
        positions: Vec::with_capacity(batch * n),
        angles: Vec::with_capacity(batch * n),
    };
    let center = (FRAME as f32 - 1.0) / 2.0;
    for v in 0..batch {
        let mut r = rng::stream(seed, &[v as u64]);
        let id = ids[r.random_range(0..ids.len())];
        let angle0 = r.random_range(0.0..TAU);
        let mask = shape_mask(id, cfg.library_seed);
        out.labels.push(id);
        for i in 0..n {
            let angle = angle0 + i as f64 * cfg.omega;
            out.frames.extend(rotate(&mask, angle));
            out.positions.push([center, center]);
            out.angles.push(angle as f32);
        }
    }
    Ok(out)
}
