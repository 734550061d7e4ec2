//! Convolutional encoder / transpose-convolutional decoder.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{flatten, unflatten, Act, BatchNorm, Buffer, Conv2d, ConvTranspose2d, Layer, Linear, Mode, Param, Relu};
use crate::elbo::PosteriorParams;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{self, tag};

/// Side length of every frame.
pub const FRAME: usize = 64;
/// Spatial side after four stride-2 stages.
const BOTTLENECK: usize = FRAME / 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 16..128 channels, 256 hidden units.
    Paper,
    /// 8..64 channels, 128 hidden units.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Invalid(format!("unknown preset {other:?} (paper|desk)"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }
}

/// Shape of the network: the four conv stages' channel counts (each stage is a
/// stride-1 conv followed by a stride-2 conv), the hidden width, and the latent width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub stage_channels: [usize; 4],
    pub hidden: usize,
    pub latent: usize,
}

impl NetConfig {
    pub fn preset(preset: Preset, latent: usize) -> Self {
        match preset {
            Preset::Paper => NetConfig { stage_channels: [16, 32, 64, 128], hidden: 256, latent },
            Preset::Desk => NetConfig { stage_channels: [8, 16, 32, 64], hidden: 128, latent },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.iter().any(|&c| c == 0) || self.hidden == 0 || self.latent == 0 {
            return Err(Error::Config(format!("network widths must be positive: {self:?}")));
        }
        Ok(())
    }

    fn bottleneck_channels(&self) -> usize {
        self.stage_channels[3]
    }
}

/// A named stack of layers.
pub struct Stack<T> {
    layers: Vec<(String, Box<dyn Layer<T>>)>,
}

impl<T: Real> Stack<T> {
    fn new() -> Self {
        Stack { layers: Vec::new() }
    }

    fn push(&mut self, name: impl Into<String>, layer: impl Layer<T> + 'static) {
        self.layers.push((name.into(), Box::new(layer)));
    }

    fn forward(&mut self, x: Act<T>, mode: Mode) -> Result<Act<T>> {
        self.layers.iter_mut().try_fold(x, |x, (_, l)| l.forward(&x, mode))
    }

    fn backward(&mut self, dy: Act<T>) -> Act<T> {
        self.layers.iter_mut().rev().fold(dy, |d, (_, l)| l.backward(&d))
    }

    fn named_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        for (name, l) in self.layers.iter_mut() {
            for p in l.params_mut() {
                out.push((format!("{prefix}.{name}.{}", p.name), p));
            }
        }
    }

    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        for (name, l) in self.layers.iter() {
            for p in l.params() {
                out.push((format!("{prefix}.{name}.{}", p.name), p));
            }
        }
    }

    fn named_buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Buffer<T>)>) {
        for (name, l) in self.layers.iter_mut() {
            for b in l.buffers_mut() {
                out.push((format!("{prefix}.{name}.{}", b.name), b));
            }
        }
    }

    fn named_buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Buffer<T>)>) {
        for (name, l) in self.layers.iter() {
            for b in l.buffers() {
                out.push((format!("{prefix}.{name}.{}", b.name), b));
            }
        }
    }
}

/// Per-frame encoder producing mean and log-variance heads.
pub struct Encoder<T> {
    convs: Stack<T>,
    dense: Stack<T>,
    mu: Linear<T>,
    log_var: Linear<T>,
    conv_out: (usize, usize, usize),
}

/// Per-frame decoder producing Bernoulli logits.
pub struct Decoder<T> {
    dense: Stack<T>,
    convs: Stack<T>,
    cfg: NetConfig,
}

impl<T: Real> Encoder<T> {
    fn new(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Stack::new();
        let mut in_c = 1;
        for (s, &c) in cfg.stage_channels.iter().enumerate() {
            for (half, stride) in [("a", 1), ("b", 2)] {
                let name = format!("conv{}{half}", s + 1);
                convs.push(name.clone(), Conv2d::new(in_c, c, stride, rng));
                convs.push(format!("{name}_bn"), BatchNorm::new(c));
                convs.push(format!("{name}_relu"), Relu::new());
                in_c = c;
            }
        }
        let flat = cfg.bottleneck_channels() * BOTTLENECK * BOTTLENECK;
        let mut dense = Stack::new();
        dense.push("linear5", Linear::new(flat, cfg.hidden, rng));
        dense.push("linear5_bn", BatchNorm::new(cfg.hidden));
        dense.push("linear5_relu", Relu::new());
        Encoder {
            convs,
            dense,
            mu: Linear::new(cfg.hidden, cfg.latent, rng),
            log_var: Linear::new(cfg.hidden, cfg.latent, rng),
            conv_out: (cfg.bottleneck_channels(), BOTTLENECK, BOTTLENECK),
        }
    }

    /// `x: [1, frames, 64, 64]` -> (`mu`, `log_var`), each `[latent, frames, 1, 1]`.
    pub fn forward(&mut self, x: Act<T>, mode: Mode) -> Result<(Act<T>, Act<T>)> {
        if x.c != 1 || x.h != FRAME || x.w != FRAME {
            return Err(Error::Shape(format!(
                "encoder expects [1, n, {FRAME}, {FRAME}] frames, got [{}, {}, {}, {}]",
                x.c, x.n, x.h, x.w
            )));
        }
        let y = self.convs.forward(x, mode)?;
        let h = self.dense.forward(flatten(&y), mode)?;
        let mu = self.mu.forward(&h, mode)?;
        let lv = self.log_var.forward(&h, mode)?;
        Ok((mu, lv))
    }

    pub fn backward(&mut self, d_mu: &Act<T>, d_log_var: &Act<T>) -> Act<T> {
        let mut dh = self.mu.backward(d_mu);
        let dh2 = self.log_var.backward(d_log_var);
        dh.data.iter_mut().zip(&dh2.data).for_each(|(a, &b)| *a += b);
        let dflat = self.dense.backward(dh);
        let (c, h, w) = self.conv_out;
        self.convs.backward(unflatten(&dflat, c, h, w))
    }

    fn named_params_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.convs.named_params_mut("enc", out);
        self.dense.named_params_mut("enc", out);
        for p in self.mu.params_mut() {
            out.push((format!("enc.mu.{}", p.name), p));
        }
        for p in self.log_var.params_mut() {
            out.push((format!("enc.log_var.{}", p.name), p));
        }
    }

    fn named_params<'a>(&'a self, out: &mut Vec<(String, &'a Param<T>)>) {
        self.convs.named_params("enc", out);
        self.dense.named_params("enc", out);
        for p in self.mu.params() {
            out.push((format!("enc.mu.{}", p.name), p));
        }
        for p in self.log_var.params() {
            out.push((format!("enc.log_var.{}", p.name), p));
        }
    }
}

impl<T: Real> Decoder<T> {
    fn new(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut dense = Stack::new();
        let flat = cfg.bottleneck_channels() * BOTTLENECK * BOTTLENECK;
        dense.push("linear1", Linear::new(cfg.latent, cfg.hidden, rng));
        dense.push("linear1_bn", BatchNorm::new(cfg.hidden));
        dense.push("linear1_relu", Relu::new());
        dense.push("linear2", Linear::new(cfg.hidden, flat, rng));
        dense.push("linear2_bn", BatchNorm::new(flat));
        dense.push("linear2_relu", Relu::new());
        // Mirror of the encoder: stage k keeps its channels with a stride-1
        // layer, then a stride-2 layer moves to the next shallower stage.
        let mut convs = Stack::new();
        let ch = cfg.stage_channels;
        let mut in_c = ch[3];
        for s in 0..4 {
            let keep = ch[3 - s];
            let next = if s == 3 { 1 } else { ch[2 - s] };
            let a = format!("convt{}a", s + 1);
            convs.push(a.clone(), ConvTranspose2d::new(in_c, keep, 1, rng));
            convs.push(format!("{a}_bn"), BatchNorm::new(keep));
            convs.push(format!("{a}_relu"), Relu::new());
            let b = format!("convt{}b", s + 1);
            convs.push(b.clone(), ConvTranspose2d::new(keep, next, 2, rng));
            if s < 3 {
                convs.push(format!("{b}_bn"), BatchNorm::new(next));
                convs.push(format!("{b}_relu"), Relu::new());
            }
            in_c = next;
        }
        Decoder { dense, convs, cfg: cfg.clone() }
    }

    /// `z: [latent, frames, 1, 1]` -> logits `[1, frames, 64, 64]`.
    pub fn forward(&mut self, z: Act<T>, mode: Mode) -> Result<Act<T>> {
        if z.c != self.cfg.latent || z.h * z.w != 1 {
            return Err(Error::Shape(format!(
                "decoder expects latent width {}, got {}",
                self.cfg.latent, z.c
            )));
        }
        let h = self.dense.forward(z, mode)?;
        let x = unflatten(&h, self.cfg.bottleneck_channels(), BOTTLENECK, BOTTLENECK);
        self.convs.forward(x, mode)
    }

    pub fn backward(&mut self, d_logits: Act<T>) -> Act<T> {
        let d = self.convs.backward(d_logits);
        self.dense.backward(flatten(&d))
    }
}

/// Encoder + decoder pair.
pub struct Model<T> {
    pub cfg: NetConfig,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
}

/// Reparameterized latent sample with the noise that produced it.
#[derive(Debug, Clone)]
pub struct LatentSample {
    /// `[batch, n_frames, width]`
    pub h: Vec<f64>,
    pub eps: Vec<f64>,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(seed, &[tag::INIT]);
        let encoder = Encoder::new(&cfg, &mut r);
        let decoder = Decoder::new(&cfg, &mut r);
        Ok(Model { cfg, encoder, decoder })
    }

    /// All trainable parameters in a fixed, named order.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        self.encoder.named_params_mut(&mut out);
        self.decoder.dense.named_params_mut("dec", &mut out);
        self.decoder.convs.named_params_mut("dec", &mut out);
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        self.encoder.named_params(&mut out);
        self.decoder.dense.named_params("dec", &mut out);
        self.decoder.convs.named_params("dec", &mut out);
        out
    }

    pub fn named_buffers_mut(&mut self) -> Vec<(String, &mut Buffer<T>)> {
        let mut out = Vec::new();
        self.encoder.convs.named_buffers_mut("enc", &mut out);
        self.encoder.dense.named_buffers_mut("enc", &mut out);
        self.decoder.dense.named_buffers_mut("dec", &mut out);
        self.decoder.convs.named_buffers_mut("dec", &mut out);
        out
    }

    pub fn named_buffers(&self) -> Vec<(String, &Buffer<T>)> {
        let mut out = Vec::new();
        self.encoder.convs.named_buffers("enc", &mut out);
        self.encoder.dense.named_buffers("enc", &mut out);
        self.decoder.dense.named_buffers("dec", &mut out);
        self.decoder.convs.named_buffers("dec", &mut out);
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Encode `[batch, n_frames, 64, 64]` frames into per-frame posteriors.
    pub fn encode(&mut self, frames: &[f32], batch: usize, n_frames: usize, mode: Mode) -> Result<PosteriorParams> {
        let (mu, lv) = self.encode_raw(frames, batch, n_frames, mode)?;
        to_posterior(&mu, &lv, batch, n_frames)
    }

    pub(crate) fn encode_raw(
        &mut self,
        frames: &[f32],
        batch: usize,
        n_frames: usize,
        mode: Mode,
    ) -> Result<(Act<T>, Act<T>)> {
        let count = batch * n_frames;
        if frames.len() != count * FRAME * FRAME {
            return Err(Error::Shape(format!(
                "expected {count} frames of {FRAME}x{FRAME} ({} values), got {}",
                count * FRAME * FRAME,
                frames.len()
            )));
        }
        let x = Act::from_vec(1, count, FRAME, FRAME, frames.iter().map(|&v| T::from_f64(v as f64)).collect());
        self.encoder.forward(x, mode)
    }

    /// Decode latents `[batch, n_frames, width]` into pixel probabilities
    /// `[batch, n_frames, 64, 64]`.
    pub fn decode(&mut self, h: &[f64], batch: usize, n_frames: usize, mode: Mode) -> Result<Vec<T>> {
        let logits = self.decode_logits(h, batch, n_frames, mode)?;
        Ok(logits.data.iter().map(|&z| sigmoid(z)).collect())
    }

    pub(crate) fn decode_logits(&mut self, h: &[f64], batch: usize, n_frames: usize, mode: Mode) -> Result<Act<T>> {
        let count = batch * n_frames;
        let width = self.cfg.latent;
        if h.len() != count * width {
            return Err(Error::Shape(format!(
                "decoder expects {count} latents of width {width}, got {} values",
                h.len()
            )));
        }
        let mut z = Act::zeros(width, count, 1, 1);
        for i in 0..count {
            for j in 0..width {
                z.data[j * count + i] = T::from_f64(h[i * width + j]);
            }
        }
        self.decoder.forward(z, mode)
    }
}

/// Logistic squashing used on decoder outputs.
#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    let z = z.to_f64();
    T::from_f64(if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) })
}

/// `[latent, frames]` heads -> `[batch, n_frames, latent]` posterior.
pub(crate) fn to_posterior<T: Real>(mu: &Act<T>, lv: &Act<T>, batch: usize, n_frames: usize) -> Result<PosteriorParams> {
    let (f, count) = (mu.c, mu.n);
    let mut m = vec![0.0; count * f];
    let mut l = vec![0.0; count * f];
    for j in 0..f {
        for i in 0..count {
            m[i * f + j] = mu.data[j * count + i].to_f64();
            l[i * f + j] = lv.data[j * count + i].to_f64();
        }
    }
    PosteriorParams::new(batch, n_frames, f, m, l)
}

/// `[batch, n_frames, latent]` -> `[latent, frames]` head gradient.
pub(crate) fn from_posterior_layout<T: Real>(g: &[f64], count: usize, f: usize) -> Act<T> {
    let mut a = Act::zeros(f, count, 1, 1);
    for i in 0..count {
        for j in 0..f {
            a.data[j * count + i] = T::from_f64(g[i * f + j]);
        }
    }
    a
}

/// `h = mu + exp(log_var / 2) * eps`, `eps ~ N(0, I)` drawn per video and frame from `seed`.
pub fn reparam_sample(post: &PosteriorParams, seed: u64) -> LatentSample {
    let (n, f) = (post.n_frames, post.width);
    let mut h = vec![0.0; post.mu.len()];
    let mut eps = vec![0.0; post.mu.len()];
    for b in 0..post.batch {
        for i in 0..n {
            let mut r = rng::stream(seed, &[tag::REPARAM, b as u64, i as u64]);
            for j in 0..f {
                let k = (b * n + i) * f + j;
                let e: f64 = StandardNormal.sample(&mut r);
                eps[k] = e;
                h[k] = post.mu[k] + (0.5 * post.log_var[k]).exp() * e;
            }
        }
    }
    LatentSample { h, eps }
}
