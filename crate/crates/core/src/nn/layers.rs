//! Layers with hand-written backward passes.
//!
//! Activations use a channel-major layout `[c, n, h, w]`: one row per channel
//! holding every sample's spatial map, so convolutions are a single gemm over
//! the whole batch and batch-norm reduces over contiguous rows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::real::{gemm, gemm_strided, MatRef, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Channel-major activation tensor `[c, n, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Act<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Act { c, n, h, w, data: vec![T::zero(); c * n * h * w] }
    }

    pub fn from_vec(c: usize, n: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * n * h * w, "activation size mismatch");
        Act { c, n, h, w, data }
    }

    /// Elements per channel row.
    pub fn row(&self) -> usize {
        self.n * self.h * self.w
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    fn new(name: &str, dims: Vec<usize>, value: Vec<T>) -> Self {
        let len = value.len();
        debug_assert_eq!(len, dims.iter().product::<usize>());
        Param { name: name.to_string(), dims, value, grad: vec![T::zero(); len] }
    }

    fn zeros(name: &str, dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self::new(name, dims, vec![T::zero(); len])
    }

    fn filled(name: &str, dims: Vec<usize>, v: T) -> Self {
        let len = dims.iter().product();
        Self::new(name, dims, vec![v; len])
    }
}

/// Non-trainable state saved with the model (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Buffer<T> {
    pub name: String,
    pub value: Vec<T>,
}

/// Truncated normal (resampled outside two standard deviations).
fn truncated_normal<T: Real>(rng: &mut ChaCha8Rng, len: usize, sd: f64) -> Vec<T> {
    (0..len)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break T::from_f64(z * sd);
            }
        })
        .collect()
}

pub trait Layer<T: Real> {
    fn forward(&mut self, x: &Act<T>, mode: Mode) -> Result<Act<T>>;
    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, dy: &Act<T>) -> Act<T>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }
    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        Vec::new()
    }
    fn buffers(&self) -> Vec<&Buffer<T>> {
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im for 3x3 kernels with padding 1.

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c: usize,
    n: usize,
    h: usize,
    w: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

const K: usize = 3;
const PAD: isize = 1;

impl Geometry {
    fn conv(c: usize, n: usize, h: usize, w: usize, stride: usize) -> Self {
        let oh = (h + 2 * PAD as usize - K) / stride + 1;
        let ow = (w + 2 * PAD as usize - K) / stride + 1;
        Geometry { c, n, h, w, stride, oh, ow }
    }

    fn cols_rows(&self) -> usize {
        self.c * K * K
    }
}

/// Output columns `ox` whose source column `ox*stride - 1 + kx` lies inside `[0, w)`.
#[inline]
fn valid_cols(g: &Geometry, kx: usize) -> (usize, usize) {
    let lo = if kx == 0 { 1usize.div_ceil(g.stride) } else { 0 };
    // largest ox with ox*stride + kx - 1 <= w - 1
    let hi = if g.w < kx { 0 } else { ((g.w - kx) / g.stride + 1).min(g.ow) };
    (lo.min(hi), hi)
}

/// `cols[(ci*9 + ky*3 + kx), (n, oy, ox)] = img[ci, n0 + n, oy*s - 1 + ky, ox*s - 1 + kx]`
/// for the `nc` frames starting at `n0`.
fn im2col<T: Real>(img: &[T], g: &Geometry, n0: usize, nc: usize, cols: &mut [T]) {
    let row_len = nc * g.oh * g.ow;
    let (plane, chan) = (g.h * g.w, g.n * g.h * g.w);
    for ci in 0..g.c {
        for ky in 0..K {
            for kx in 0..K {
                let r = (ci * K + ky) * K + kx;
                let out = &mut cols[r * row_len..(r + 1) * row_len];
                let (lo, hi) = valid_cols(g, kx);
                for n in 0..nc {
                    let base = ci * chan + (n0 + n) * plane;
                    let src = &img[base..base + plane];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride) as isize - PAD + ky as isize;
                        let dst = &mut out[(n * g.oh + oy) * g.ow..(n * g.oh + oy + 1) * g.ow];
                        if iy < 0 || iy >= g.h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let line = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        if lo >= hi {
                            continue;
                        }
                        let first = lo * g.stride + kx - PAD as usize;
                        if g.stride == 1 {
                            dst[lo..hi].copy_from_slice(&line[first..first + hi - lo]);
                        } else {
                            for (d, s) in dst[lo..hi].iter_mut().zip(line[first..].iter().step_by(g.stride)) {
                                *d = *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns into frames `n0..n0 + nc` of `img`.
fn col2im<T: Real>(cols: &[T], g: &Geometry, n0: usize, nc: usize, img: &mut [T]) {
    let row_len = nc * g.oh * g.ow;
    let (plane, chan) = (g.h * g.w, g.n * g.h * g.w);
    for ci in 0..g.c {
        for ky in 0..K {
            for kx in 0..K {
                let r = (ci * K + ky) * K + kx;
                let src_row = &cols[r * row_len..(r + 1) * row_len];
                let (lo, hi) = valid_cols(g, kx);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kx - PAD as usize;
                for n in 0..nc {
                    let base = ci * chan + (n0 + n) * plane;
                    let dst = &mut img[base..base + plane];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride) as isize - PAD + ky as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let line = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let src = &src_row[(n * g.oh + oy) * g.ow + lo..(n * g.oh + oy) * g.ow + hi];
                        if g.stride == 1 {
                            for (d, &v) in line[first..first + hi - lo].iter_mut().zip(src) {
                                *d += v;
                            }
                        } else {
                            for (d, &v) in line[first..].iter_mut().step_by(g.stride).zip(src) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Frames per im2col chunk so the column buffer stays cache-sized.
fn frames_per_chunk(per_frame: usize, frames: usize) -> usize {
    const TARGET: usize = 1 << 17;
    (TARGET / per_frame.max(1)).clamp(1, frames.max(1))
}

fn add_bias_rows<T: Real>(data: &mut [T], bias: &[T]) {
    let row = data.len() / bias.len();
    for (chunk, &b) in data.chunks_mut(row).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_row_sums<T: Real>(data: &[T], out: &mut [T]) {
    let row = data.len() / out.len();
    for (chunk, o) in data.chunks(row).zip(out.iter_mut()) {
        let mut s = 0.0f64;
        for &v in chunk {
            s += v.to_f64();
        }
        *o += T::from_f64(s);
    }
}

// ---------------------------------------------------------------------------

/// 3x3 convolution, padding 1.
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub stride: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Act<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_c: usize, out_c: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_c * K * K;
        let w = truncated_normal(rng, out_c * fan_in, (2.0 / fan_in as f64).sqrt());
        Conv2d {
            in_c,
            out_c,
            stride,
            weight: Param::new("weight", vec![out_c, in_c, K, K], w),
            bias: Param::zeros("bias", vec![out_c]),
            input: None,
        }
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Act<T>, _mode: Mode) -> Result<Act<T>> {
        if x.c != self.in_c {
            return Err(Error::Shape(format!("conv expects {} channels, got {}", self.in_c, x.c)));
        }
        let g = Geometry::conv(x.c, x.n, x.h, x.w, self.stride);
        let (rows, opix) = (g.cols_rows(), g.oh * g.ow);
        let mut y = Act::zeros(self.out_c, x.n, g.oh, g.ow);
        let fc = frames_per_chunk(rows * opix, x.n);
        let mut buf = vec![T::zero(); rows * fc * opix];
        for n0 in (0..x.n).step_by(fc) {
            let nc = fc.min(x.n - n0);
            let cols = &mut buf[..rows * nc * opix];
            im2col(&x.data, &g, n0, nc, cols);
            gemm_strided(
                MatRef::new(&self.weight.value, self.out_c, rows),
                MatRef::new(cols, rows, nc * opix),
                T::zero(),
                &mut y.data[n0 * opix..],
                x.n * opix,
            );
        }
        add_bias_rows(&mut y.data, &self.bias.value);
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let x = self.input.take().expect("conv backward without forward");
        let g = Geometry::conv(x.c, x.n, x.h, x.w, self.stride);
        let (rows, opix) = (g.cols_rows(), g.oh * g.ow);
        accumulate_row_sums(&dy.data, &mut self.bias.grad);
        let mut dx = Act::zeros(x.c, x.n, x.h, x.w);
        let fc = frames_per_chunk(rows * opix, x.n);
        let mut buf = vec![T::zero(); rows * fc * opix];
        for n0 in (0..x.n).step_by(fc) {
            let nc = fc.min(x.n - n0);
            let cols = &mut buf[..rows * nc * opix];
            let dy_chunk = MatRef::strided(&dy.data[n0 * opix..], self.out_c, nc * opix, x.n * opix);
            im2col(&x.data, &g, n0, nc, cols);
            // dW += dY * cols^T
            gemm(dy_chunk, MatRef::new(cols, rows, nc * opix).t(), T::one(), &mut self.weight.grad);
            // dcols = W^T * dY
            gemm(MatRef::new(&self.weight.value, self.out_c, rows).t(), dy_chunk, T::zero(), cols);
            col2im(cols, &g, n0, nc, &mut dx.data);
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
}

/// 3x3 transposed convolution, padding 1; stride 2 doubles the spatial size.
pub struct ConvTranspose2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub stride: usize,
    /// `[in_c, out_c, 3, 3]`
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Act<T>>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new(in_c: usize, out_c: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_c * K * K;
        let w = truncated_normal(rng, in_c * out_c * K * K, (2.0 / fan_in as f64).sqrt());
        ConvTranspose2d {
            in_c,
            out_c,
            stride,
            weight: Param::new("weight", vec![in_c, out_c, K, K], w),
            bias: Param::zeros("bias", vec![out_c]),
            input: None,
        }
    }

    /// Geometry of the adjoint convolution: output image -> input map.
    fn geometry(&self, x: &Act<T>) -> Geometry {
        // output padding of stride-1 so each stage scales exactly by `stride`
        let (oh, ow) = (x.h * self.stride, x.w * self.stride);
        let g = Geometry::conv(self.out_c, x.n, oh, ow, self.stride);
        debug_assert_eq!((g.oh, g.ow), (x.h, x.w));
        g
    }
}

impl<T: Real> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Act<T>, _mode: Mode) -> Result<Act<T>> {
        if x.c != self.in_c {
            return Err(Error::Shape(format!("transpose conv expects {} channels, got {}", self.in_c, x.c)));
        }
        let g = self.geometry(x);
        let (rows, ipix) = (g.cols_rows(), g.oh * g.ow);
        let mut y = Act::zeros(self.out_c, x.n, g.h, g.w);
        let fc = frames_per_chunk(rows * ipix, x.n);
        let mut buf = vec![T::zero(); rows * fc * ipix];
        for n0 in (0..x.n).step_by(fc) {
            let nc = fc.min(x.n - n0);
            let cols = &mut buf[..rows * nc * ipix];
            gemm(
                MatRef::new(&self.weight.value, self.in_c, rows).t(),
                MatRef::strided(&x.data[n0 * ipix..], self.in_c, nc * ipix, x.n * ipix),
                T::zero(),
                cols,
            );
            col2im(cols, &g, n0, nc, &mut y.data);
        }
        add_bias_rows(&mut y.data, &self.bias.value);
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let x = self.input.take().expect("transpose conv backward without forward");
        let g = self.geometry(&x);
        let (rows, ipix) = (g.cols_rows(), g.oh * g.ow);
        accumulate_row_sums(&dy.data, &mut self.bias.grad);
        let mut dx = Act::zeros(x.c, x.n, x.h, x.w);
        let fc = frames_per_chunk(rows * ipix, x.n);
        let mut buf = vec![T::zero(); rows * fc * ipix];
        for n0 in (0..x.n).step_by(fc) {
            let nc = fc.min(x.n - n0);
            let cols = &mut buf[..rows * nc * ipix];
            im2col(&dy.data, &g, n0, nc, cols);
            let x_chunk = MatRef::strided(&x.data[n0 * ipix..], self.in_c, nc * ipix, x.n * ipix);
            // dW += X * cols^T
            gemm(x_chunk, MatRef::new(cols, rows, nc * ipix).t(), T::one(), &mut self.weight.grad);
            gemm_strided(
                MatRef::new(&self.weight.value, self.in_c, rows),
                MatRef::new(cols, rows, nc * ipix),
                T::zero(),
                &mut dx.data[n0 * ipix..],
                x.n * ipix,
            );
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
}

/// Fully connected layer on `[features, n, 1, 1]` activations.
pub struct Linear<T> {
    pub in_f: usize,
    pub out_f: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Act<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(in_f: usize, out_f: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = truncated_normal(rng, out_f * in_f, (2.0 / in_f as f64).sqrt());
        Linear {
            in_f,
            out_f,
            weight: Param::new("weight", vec![out_f, in_f], w),
            bias: Param::zeros("bias", vec![out_f]),
            input: None,
        }
    }
}

impl<T: Real> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Act<T>, _mode: Mode) -> Result<Act<T>> {
        if x.c * x.h * x.w != self.in_f || x.h * x.w != 1 {
            return Err(Error::Shape(format!(
                "linear expects [{}, n, 1, 1], got [{}, {}, {}, {}]",
                self.in_f, x.c, x.n, x.h, x.w
            )));
        }
        let mut y = Act::zeros(self.out_f, x.n, 1, 1);
        gemm(
            MatRef::new(&self.weight.value, self.out_f, self.in_f),
            MatRef::new(&x.data, self.in_f, x.n),
            T::zero(),
            &mut y.data,
        );
        add_bias_rows(&mut y.data, &self.bias.value);
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let x = self.input.take().expect("linear backward without forward");
        gemm(
            MatRef::new(&dy.data, self.out_f, x.n),
            MatRef::new(&x.data, self.in_f, x.n).t(),
            T::one(),
            &mut self.weight.grad,
        );
        accumulate_row_sums(&dy.data, &mut self.bias.grad);
        let mut dx = Act::zeros(self.in_f, x.n, 1, 1);
        gemm(
            MatRef::new(&self.weight.value, self.out_f, self.in_f).t(),
            MatRef::new(&dy.data, self.out_f, x.n),
            T::zero(),
            &mut dx.data,
        );
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization.
pub struct BatchNorm<T> {
    pub channels: usize,
    pub scale: Param<T>,
    pub shift: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    cache: Option<(Vec<T>, Vec<f64>, Mode)>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            scale: Param::filled("scale", vec![channels], T::one()),
            shift: Param::zeros("shift", vec![channels]),
            running_mean: Buffer { name: "running_mean".into(), value: vec![T::zero(); channels] },
            running_var: Buffer { name: "running_var".into(), value: vec![T::one(); channels] },
            cache: None,
        }
    }
}

impl<T: Real> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Act<T>, mode: Mode) -> Result<Act<T>> {
        if x.c != self.channels {
            return Err(Error::Shape(format!("batch norm expects {} channels, got {}", self.channels, x.c)));
        }
        let row = x.row();
        if mode == Mode::Train && x.n < 2 {
            return Err(Error::Invalid("batch norm in train mode needs a batch of at least 2".into()));
        }
        let mut y = x.clone();
        let mut xhat = vec![T::zero(); x.data.len()];
        let mut inv_std = vec![0.0f64; self.channels];
        for ch in 0..self.channels {
            let src = &x.data[ch * row..(ch + 1) * row];
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = src.iter().map(|v| v.to_f64()).sum::<f64>() / row as f64;
                    let var = src.iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>() / row as f64;
                    let rm = &mut self.running_mean.value[ch];
                    *rm = T::from_f64(BN_MOMENTUM * rm.to_f64() + (1.0 - BN_MOMENTUM) * mean);
                    let rv = &mut self.running_var.value[ch];
                    *rv = T::from_f64(BN_MOMENTUM * rv.to_f64() + (1.0 - BN_MOMENTUM) * var);
                    (mean, var)
                }
                Mode::Infer => (self.running_mean.value[ch].to_f64(), self.running_var.value[ch].to_f64()),
            };
            let is = 1.0 / (var + BN_EPS).sqrt();
            inv_std[ch] = is;
            let (s, b) = (self.scale.value[ch], self.shift.value[ch]);
            let (mean_t, is_t) = (T::from_f64(mean), T::from_f64(is));
            for ((yv, xh), &xv) in y.data[ch * row..(ch + 1) * row]
                .iter_mut()
                .zip(&mut xhat[ch * row..(ch + 1) * row])
                .zip(src)
            {
                *xh = (xv - mean_t) * is_t;
                *yv = *xh * s + b;
            }
        }
        self.cache = Some((xhat, inv_std, mode));
        Ok(y)
    }

    fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let (xhat, inv_std, mode) = self.cache.take().expect("batch norm backward without forward");
        let row = dy.row();
        let mut dx = dy.clone();
        for ch in 0..self.channels {
            let g = &dy.data[ch * row..(ch + 1) * row];
            let xh = &xhat[ch * row..(ch + 1) * row];
            let mut sum_g = 0.0f64;
            let mut sum_gx = 0.0f64;
            for (&gv, &xv) in g.iter().zip(xh) {
                sum_g += gv.to_f64();
                sum_gx += gv.to_f64() * xv.to_f64();
            }
            self.shift.grad[ch] += T::from_f64(sum_g);
            self.scale.grad[ch] += T::from_f64(sum_gx);
            let s = self.scale.value[ch].to_f64();
            let is = inv_std[ch];
            let out = &mut dx.data[ch * row..(ch + 1) * row];
            match mode {
                Mode::Train => {
                    let m = row as f64;
                    let (mg, mgx) = (sum_g / m, sum_gx / m);
                    for ((o, &gv), &xv) in out.iter_mut().zip(g).zip(xh) {
                        *o = T::from_f64(s * is * (gv.to_f64() - mg - xv.to_f64() * mgx));
                    }
                }
                Mode::Infer => {
                    for (o, &gv) in out.iter_mut().zip(g) {
                        *o = T::from_f64(s * is * gv.to_f64());
                    }
                }
            }
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.scale, &mut self.shift]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.scale, &self.shift]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        vec![&self.running_mean, &self.running_var]
    }
}

#[derive(Default)]
pub struct Relu<T> {
    output: Option<Act<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Relu { output: None }
    }
}

impl<T: Real> Layer<T> for Relu<T> {
    fn forward(&mut self, x: &Act<T>, _mode: Mode) -> Result<Act<T>> {
        let mut y = x.clone();
        y.data.iter_mut().for_each(|v| {
            if *v < T::zero() {
                *v = T::zero()
            }
        });
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let y = self.output.take().expect("relu backward without forward");
        let mut dx = dy.clone();
        for (d, &v) in dx.data.iter_mut().zip(&y.data) {
            if v <= T::zero() {
                *d = T::zero();
            }
        }
        dx
    }
}

/// `[c, n, h, w] -> [c*h*w, n, 1, 1]`, feature index `c*h*w + y*w + x`.
pub fn flatten<T: Real>(x: &Act<T>) -> Act<T> {
    let plane = x.h * x.w;
    let f = x.c * plane;
    let mut out = Act::zeros(f, x.n, 1, 1);
    for c in 0..x.c {
        for n in 0..x.n {
            let src = &x.data[(c * x.n + n) * plane..(c * x.n + n + 1) * plane];
            for (p, &v) in src.iter().enumerate() {
                out.data[(c * plane + p) * x.n + n] = v;
            }
        }
    }
    out
}

/// Inverse of [`flatten`].
pub fn unflatten<T: Real>(x: &Act<T>, c: usize, h: usize, w: usize) -> Act<T> {
    let plane = h * w;
    assert_eq!(x.c, c * plane, "unflatten size mismatch");
    let mut out = Act::zeros(c, x.n, h, w);
    for ch in 0..c {
        for n in 0..x.n {
            let dst = &mut out.data[(ch * x.n + n) * plane..(ch * x.n + n + 1) * plane];
            for (p, d) in dst.iter_mut().enumerate() {
                *d = x.data[(ch * plane + p) * x.n + n];
            }
        }
    }
    out
}
