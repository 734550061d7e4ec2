//! Bouncing digits: one sprite per video translating at constant speed with
//! elastic reflection at the canvas border.

use rand::Rng;

use super::{SpriteBank, VideoBatch};
use crate::error::{Error, Result};
use crate::nn::FRAME;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BounceConfig {
    pub canvas: usize,
    pub sprite: usize,
    /// Pixels per frame.
    pub speed: f64,
    pub n_frames: usize,
    pub digit_classes: Vec<u8>,
}

impl Default for BounceConfig {
    fn default() -> Self {
        BounceConfig { canvas: FRAME, sprite: 28, speed: 3.0, n_frames: 16, digit_classes: (0..10).collect() }
    }
}

impl BounceConfig {
    pub fn validate(&self, sprites: &SpriteBank) -> Result<()> {
        if self.canvas != FRAME {
            return Err(Error::Config(format!("canvas must be {FRAME}x{FRAME}")));
        }
        if sprites.size > self.canvas || self.sprite > self.canvas {
            return Err(Error::Config(format!(
                "sprite {}x{} larger than canvas {}",
                sprites.size, sprites.size, self.canvas
            )));
        }
        if self.speed < 0.0 || !self.speed.is_finite() {
            return Err(Error::Config(format!("speed must be non-negative, got {}", self.speed)));
        }
        if self.n_frames == 0 || self.digit_classes.is_empty() {
            return Err(Error::Config("need at least one frame and one digit class".into()));
        }
        for &d in &self.digit_classes {
            if sprites.indices_of(d).is_empty() {
                return Err(Error::Config(format!("no sprites for digit {d}")));
            }
        }
        Ok(())
    }
}

/// Tight bounding box of the nonzero pixels: `(row0, col0, height, width)`.
pub fn ink_box(img: &[f32], size: usize) -> (usize, usize, usize, usize) {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..size {
        for c in 0..size {
            if img[r * size + c] > 0.0 {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    if r0 == usize::MAX {
        (0, 0, size, size)
    } else {
        (r0, c0, r1 - r0 + 1, c1 - c0 + 1)
    }
}

/// Per-frame top-left of the ink box and the velocity after each frame's move.
#[derive(Debug, Clone)]
pub struct Track {
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
}

/// Integrate positions with reflection inside `[0, max]` per axis.
pub fn bounce_track(start: [f64; 2], velocity: [f64; 2], max: [f64; 2], n_frames: usize) -> Track {
    let (mut p, mut v) = (start, velocity);
    let mut track = Track { pos: Vec::with_capacity(n_frames), vel: Vec::with_capacity(n_frames) };
    for _ in 0..n_frames {
        track.pos.push(p);
        for a in 0..2 {
            p[a] += v[a];
            if p[a] <= 0.0 && v[a] < 0.0 {
                p[a] = -p[a];
                v[a] = -v[a];
            } else if p[a] >= max[a] && v[a] > 0.0 {
                p[a] = 2.0 * max[a] - p[a];
                v[a] = -v[a];
            }
            p[a] = p[a].clamp(0.0, max[a]);
        }
        track.vel.push(v);
    }
    track
}

/// Generate `batch` videos. Content depends only on `(cfg, sprites, seed)`.
pub fn gen_bouncing_mnist(cfg: &BounceConfig, sprites: &SpriteBank, batch: usize, seed: u64) -> Result<VideoBatch> {
    cfg.validate(sprites)?;
    let n = cfg.n_frames;
    let c = cfg.canvas;
    let s = sprites.size;
    let by_class: Vec<Vec<usize>> = cfg.digit_classes.iter().map(|&d| sprites.indices_of(d)).collect();
    let mut out = VideoBatch {
        batch,
        n_frames: n,
        frames: vec![0.0; batch * n * c * c],
        labels: Vec::with_capacity(batch),
        positions: Vec::with_capacity(batch * n),
        angles: Vec::new(),
    };
    for v in 0..batch {
        let mut r = rng::stream(seed, &[v as u64]);
        let class = r.random_range(0..cfg.digit_classes.len());
        let pool = &by_class[class];
        let img = &sprites.images[pool[r.random_range(0..pool.len())]];
        let (r0, c0, bh, bw) = ink_box(img, s);
        let max = [(c - bh) as f64, (c - bw) as f64];
        let start = [r.random_range(0.0..=max[0]), r.random_range(0.0..=max[1])];
        let theta = r.random_range(0.0..std::f64::consts::TAU);
        let vel = [cfg.speed * theta.sin(), cfg.speed * theta.cos()];
        let track = bounce_track(start, vel, max, n);
        out.labels.push(cfg.digit_classes[class] as u32);
        for (i, p) in track.pos.iter().enumerate() {
            let (top, left) = (p[0].round() as isize, p[1].round() as isize);
            let frame = &mut out.frames[(v * n + i) * c * c..(v * n + i + 1) * c * c];
            for sr in r0..r0 + bh {
                let y = top + (sr - r0) as isize;
                for sc in c0..c0 + bw {
                    let x = left + (sc - c0) as isize;
                    let px = &mut frame[y as usize * c + x as usize];
                    *px = px.max(img[sr * s + sc]);
                }
            }
            out.positions.push([top as f32 + bh as f32 / 2.0, left as f32 + bw as f32 / 2.0]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::glyphs::glyph_bank;

    fn bank() -> SpriteBank {
        glyph_bank(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9], 4, 11)
    }

    #[test]
    fn zero_speed_gives_static_frames() {
        let cfg = BounceConfig { speed: 0.0, ..Default::default() };
        let b = gen_bouncing_mnist(&cfg, &bank(), 3, 5).unwrap();
        for v in 0..3 {
            for i in 1..16 {
                assert_eq!(b.frame(v, i), b.frame(v, 0));
            }
        }
    }

    #[test]
    fn reflection_flips_velocity_at_right_border() {
        let t = bounce_track([10.0, 30.0], [0.0, 3.0], [36.0, 36.0], 8);
        let hit = t.pos.iter().position(|p| p[1] >= 33.0).unwrap();
        assert!(t.vel[hit].iter().all(|v| v.is_finite()));
        assert!(t.vel[hit][1] < 0.0);
        for k in hit..8 {
            assert!(t.vel[k][1] < 0.0);
        }
    }

    #[test]
    fn deterministic_and_within_canvas() {
        let cfg = BounceConfig { speed: 4.5, ..Default::default() };
        let a = gen_bouncing_mnist(&cfg, &bank(), 20, 9).unwrap();
        let b = gen_bouncing_mnist(&cfg, &bank(), 20, 9).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        for p in &a.positions {
            assert!(p[0] > 0.0 && p[0] < 64.0 && p[1] > 0.0 && p[1] < 64.0);
        }
        let c = gen_bouncing_mnist(&cfg, &bank(), 20, 10).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn ink_is_never_clipped() {
        let b = bank();
        let cfg = BounceConfig::default();
        let videos = gen_bouncing_mnist(&cfg, &b, 30, 3).unwrap();
        // total ink per frame is constant within a video
        for v in 0..30 {
            let ink0: f32 = videos.frame(v, 0).iter().sum();
            for i in 1..16 {
                let ink: f32 = videos.frame(v, i).iter().sum();
                assert!((ink - ink0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn rejects_oversized_sprites() {
        let big = SpriteBank { size: 70, images: vec![vec![0.0; 70 * 70]], labels: vec![1] };
        let cfg = BounceConfig { digit_classes: vec![1], ..Default::default() };
        assert!(gen_bouncing_mnist(&cfg, &big, 1, 0).is_err());
    }
}
