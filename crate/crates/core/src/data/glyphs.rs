//! Procedurally rendered handwritten-style digit sprites.
//!
//! Each digit is a set of strokes in the unit square. Instances get a random
//! scale, slant, rotation, stroke width and per-point jitter, and are drawn
//! anti-aliased into a 28x28 sprite with the glyph in the central 20x20 box,
//! the same framing as MNIST.

use std::f64::consts::PI;

use rand::Rng;

use crate::data::SpriteBank;
use crate::rng::{self, tag};

pub const SPRITE: usize = 28;
const BOX: f64 = 20.0;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0_deg: f64, a1_deg: f64) -> Stroke {
    let steps = 20;
    (0..=steps)
        .map(|k| {
            let a = (a0_deg + (a1_deg - a0_deg) * k as f64 / steps as f64) * PI / 180.0;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn strokes(digit: u8) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.3, 0.45, 0.0, 360.0)],
        1 => vec![vec![(0.55, 0.03), (0.55, 0.97)], vec![(0.33, 0.22), (0.55, 0.03)]],
        2 => {
            let mut s = arc(0.5, 0.3, 0.3, 0.25, -180.0, 30.0);
            s.push((0.18, 0.95));
            s.push((0.86, 0.95));
            vec![s]
        }
        3 => vec![arc(0.5, 0.28, 0.28, 0.23, -160.0, 90.0), arc(0.5, 0.72, 0.32, 0.23, -90.0, 160.0)],
        4 => vec![vec![(0.7, 0.97), (0.7, 0.03), (0.12, 0.66), (0.9, 0.66)]],
        5 => {
            let mut s = vec![(0.82, 0.05), (0.3, 0.05), (0.26, 0.45)];
            s.extend(arc(0.5, 0.68, 0.32, 0.27, -140.0, 150.0));
            vec![s]
        }
        6 => vec![vec![(0.74, 0.04), (0.42, 0.28), (0.26, 0.62)], arc(0.5, 0.71, 0.25, 0.25, 0.0, 360.0)],
        7 => vec![vec![(0.14, 0.05), (0.86, 0.05), (0.4, 0.97)]],
        8 => vec![arc(0.5, 0.27, 0.22, 0.22, 0.0, 360.0), arc(0.5, 0.72, 0.28, 0.24, 0.0, 360.0)],
        9 => vec![arc(0.5, 0.3, 0.25, 0.25, 0.0, 360.0), vec![(0.75, 0.3), (0.68, 0.97)]],
        _ => panic!("digit out of range: {digit}"),
    }
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Render one instance of `digit`; the result is quantized to multiples of 1/255.
pub fn render_digit<R: Rng>(digit: u8, rng: &mut R) -> Vec<f32> {
    let scale = rng.random_range(0.8..1.0);
    let shear = rng.random_range(-0.3..0.3);
    let rot = rng.random_range(-0.15..0.15f64);
    let width = rng.random_range(1.8..3.0);
    let jitter = 0.035;
    let (sr, cr) = rot.sin_cos();
    let offset = (SPRITE as f64 - BOX) / 2.0;
    let to_px = |(x, y): (f64, f64)| -> (f64, f64) {
        let (x, y) = (x - 0.5, y - 0.5);
        let x = x + shear * -y;
        let (x, y) = (cr * x - sr * y, sr * x + cr * y);
        (offset + BOX * (0.5 + scale * x), offset + BOX * (0.5 + scale * y))
    };
    let segs: Vec<((f64, f64), (f64, f64))> = strokes(digit)
        .into_iter()
        .flat_map(|s| {
            let pts: Vec<(f64, f64)> = s
                .into_iter()
                .map(|(x, y)| to_px((x + rng.random_range(-jitter..jitter), y + rng.random_range(-jitter..jitter))))
                .collect();
            pts.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();
    let mut img = vec![0f32; SPRITE * SPRITE];
    for py in 0..SPRITE {
        for px in 0..SPRITE {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let d = segs.iter().map(|&(a, b)| seg_dist(p, a, b)).fold(f64::INFINITY, f64::min);
            let v = (width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
            img[py * SPRITE + px] = quantize(v);
        }
    }
    img
}

/// Round to the nearest multiple of 1/255, as stored in 8-bit images.
pub fn quantize(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8 as f32 / 255.0
}

/// `per_class` sprites of each digit in `digits`.
pub fn glyph_bank(digits: &[u8], per_class: usize, seed: u64) -> SpriteBank {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for &d in digits {
        for k in 0..per_class {
            let mut r = rng::stream(seed, &[tag::GLYPH, d as u64, k as u64]);
            images.push(render_digit(d, &mut r));
            labels.push(d);
        }
    }
    SpriteBank { size: SPRITE, images, labels }
}
