//! Training loop: Adam on the negative ELBO with step learning-rate decay,
//! deterministic replay from the seed, checkpointing and a CSV metrics log.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{DataConfig, DatasetKind, VideoSource};
use crate::elbo::{bernoulli_recon_loglik, kl_for_variant, Variant, PROB_EPS};
use crate::error::{Error, Result};
use crate::kv::{self, KvMap};
use crate::nn::checkpoint::{Checkpoint, NamedTensor};
use crate::nn::layers::Param;
use crate::nn::model::{from_posterior_layout, sigmoid, to_posterior};
use crate::nn::{reparam_sample, Act, Mode, Model, NetConfig, Preset};
use crate::prior::PriorConfig;
use crate::real::Real;
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_videos: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step: u64,
    pub beta: f64,
    pub variant: Variant,
    pub prior: PriorConfig,
    pub preset: Preset,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 30_000,
            batch_videos: 64,
            lr0: 1e-3,
            lr_decay: 0.1,
            lr_step: 10_000,
            beta: 1.0,
            variant: Variant::Factored,
            prior: PriorConfig::default(),
            preset: Preset::Paper,
            seed: 0,
            checkpoint_every: 0,
            log_every: 1,
            data: DataConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.iterations == 0 || self.batch_videos == 0 || self.lr_step == 0 || self.log_every == 0 {
            return Err(Error::Config("iterations, batch_videos, lr_step and log_every must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::Config("lr0 and lr_decay must be positive".into()));
        }
        if self.batch_videos * self.prior.n_frames < 2 {
            // batch norm in train mode needs at least two frames
            return Err(Error::Config("need at least two frames per batch".into()));
        }
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig::preset(self.preset, self.prior.total_width())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("iterations", self.iterations.to_string());
        put("batch_videos", self.batch_videos.to_string());
        put("lr0", self.lr0.to_string());
        put("lr_decay", self.lr_decay.to_string());
        put("lr_step", self.lr_step.to_string());
        put("beta", self.beta.to_string());
        put("variant", self.variant.name().to_string());
        put("preset", self.preset.name().to_string());
        put("seed", self.seed.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("log_every", self.log_every.to_string());
        put("prior.sigma2_s", self.prior.sigma2_s.to_string());
        put("prior.sigma2_t", self.prior.sigma2_t.to_string());
        put("prior.f_s", self.prior.f_s.to_string());
        put("prior.f_t", self.prior.f_t.to_string());
        put("prior.n_frames", self.prior.n_frames.to_string());
        let d = &self.data;
        put("data.kind", d.kind.name().to_string());
        put("data.digits", d.digit_classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","));
        put("data.sprites_per_class", d.sprites_per_class.to_string());
        put("data.speed", d.speed.to_string());
        put("data.omega", d.omega.to_string());
        put("data.train_shapes", d.train_shapes.to_string());
        put("data.held_out_shapes", d.held_out_shapes.to_string());
        if let Some(p) = &d.mnist_images {
            put("data.mnist_images", p.display().to_string());
        }
        if let Some(p) = &d.mnist_labels {
            put("data.mnist_labels", p.display().to_string());
        }
        m
    }

    /// Overlay the keys present in `m` on `base`. Unknown keys are rejected.
    pub fn from_kv_over(base: &TrainConfig, m: &KvMap) -> Result<TrainConfig> {
        const KNOWN: &[&str] = &[
            "iterations",
            "batch_videos",
            "lr0",
            "lr_decay",
            "lr_step",
            "beta",
            "variant",
            "preset",
            "seed",
            "checkpoint_every",
            "log_every",
            "prior.sigma2_s",
            "prior.sigma2_t",
            "prior.f_s",
            "prior.f_t",
            "prior.n_frames",
            "data.kind",
            "data.digits",
            "data.sprites_per_class",
            "data.speed",
            "data.omega",
            "data.train_shapes",
            "data.held_out_shapes",
            "data.mnist_images",
            "data.mnist_labels",
        ];
        if let Some(k) = m.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        let b = base;
        let digits = match m.get("data.digits") {
            None => b.data.digit_classes.clone(),
            Some(s) => s
                .split(',')
                .map(|t| match t.trim().parse::<u8>() {
                    Ok(d) if d < 10 => Ok(d),
                    _ => Err(Error::Config(format!("data.digits: bad digit {t:?}"))),
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let cfg = TrainConfig {
            iterations: kv::get_or(m, "iterations", b.iterations)?,
            batch_videos: kv::get_or(m, "batch_videos", b.batch_videos)?,
            lr0: kv::get_or(m, "lr0", b.lr0)?,
            lr_decay: kv::get_or(m, "lr_decay", b.lr_decay)?,
            lr_step: kv::get_or(m, "lr_step", b.lr_step)?,
            beta: kv::get_or(m, "beta", b.beta)?,
            variant: kv::get_or(m, "variant", b.variant)?,
            preset: kv::get_or(m, "preset", b.preset)?,
            seed: kv::get_or(m, "seed", b.seed)?,
            checkpoint_every: kv::get_or(m, "checkpoint_every", b.checkpoint_every)?,
            log_every: kv::get_or(m, "log_every", b.log_every)?,
            prior: PriorConfig {
                sigma2_s: kv::get_or(m, "prior.sigma2_s", b.prior.sigma2_s)?,
                sigma2_t: kv::get_or(m, "prior.sigma2_t", b.prior.sigma2_t)?,
                f_s: kv::get_or(m, "prior.f_s", b.prior.f_s)?,
                f_t: kv::get_or(m, "prior.f_t", b.prior.f_t)?,
                n_frames: kv::get_or(m, "prior.n_frames", b.prior.n_frames)?,
            },
            data: DataConfig {
                kind: kv::get_or::<DatasetKind>(m, "data.kind", b.data.kind)?,
                digit_classes: digits,
                sprites_per_class: kv::get_or(m, "data.sprites_per_class", b.data.sprites_per_class)?,
                speed: kv::get_or(m, "data.speed", b.data.speed)?,
                omega: kv::get_or(m, "data.omega", b.data.omega)?,
                train_shapes: kv::get_or(m, "data.train_shapes", b.data.train_shapes)?,
                held_out_shapes: kv::get_or(m, "data.held_out_shapes", b.data.held_out_shapes)?,
                mnist_images: m.get("data.mnist_images").map(PathBuf::from).or_else(|| b.data.mnist_images.clone()),
                mnist_labels: m.get("data.mnist_labels").map(PathBuf::from).or_else(|| b.data.mnist_labels.clone()),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv(m: &KvMap) -> Result<TrainConfig> {
        Self::from_kv_over(&TrainConfig::default(), m)
    }
}

/// `lr0 * lr_decay^floor(iter / lr_step)`.
pub fn lr_schedule(iter: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((iter / cfg.lr_step) as i32)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments, kept in f64 regardless of the parameter type.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState { m: sizes.iter().map(|&n| vec![0.0; n]).collect(), v: sizes.iter().map(|&n| vec![0.0; n]).collect(), t: 0 }
    }
}

/// One bias-corrected Adam step descending `grads` (the gradient of the
/// negative ELBO). Nothing is modified if any gradient is non-finite.
pub fn adam_step<T: Real>(params: &mut [(String, &mut Param<T>)], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Shape(format!("{} parameters but optimizer state for {}", params.len(), state.m.len())));
    }
    for (k, (name, p)) in params.iter().enumerate() {
        if p.grad.len() != state.m[k].len() || p.value.len() != p.grad.len() {
            return Err(Error::Shape(format!("{name}: optimizer state has {} entries, parameter {}", state.m[k].len(), p.value.len())));
        }
        if let Some(i) = p.grad.iter().position(|g| !g.to_f64().is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}[{i}] at step {}", state.t + 1)));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (k, (_, p)) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.value.len() {
            let g = p.grad[i].to_f64();
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let step = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
            p.value[i] = T::from_f64(p.value[i].to_f64() - step);
        }
    }
    Ok(())
}

/// One row of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: u64,
    pub lr: f64,
    pub elbo: f64,
    pub recon: f64,
    pub kl: f64,
    pub entropy: f64,
    pub static_ce: f64,
    pub temporal_ce: f64,
}

pub const LOG_HEADER: &str = "iter,lr,elbo,recon,kl,entropy,static_ce,temporal_ce";

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter, self.lr, self.elbo, self.recon, self.kl, self.entropy, self.static_ce, self.temporal_ce
        )
    }
}

pub struct Trainer<T> {
    pub cfg: TrainConfig,
    pub model: Model<T>,
    pub adam: AdamState,
    /// Completed iterations.
    pub iter: u64,
    source: Box<dyn VideoSource + Send + Sync>,
}

impl<T: Real> Trainer<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        let net = cfg.net_config();
        Self::with_net(cfg, net)
    }

    /// A trainer whose network shape overrides the preset.
    pub fn with_net(cfg: TrainConfig, net: NetConfig) -> Result<Self> {
        cfg.validate()?;
        if net.latent != cfg.prior.total_width() {
            return Err(Error::Config(format!("network latent {} != f_s + f_t = {}", net.latent, cfg.prior.total_width())));
        }
        let model = Model::new(net, cfg.seed)?;
        let sizes: Vec<usize> = model.named_params().iter().map(|(_, p)| p.value.len()).collect();
        let source = cfg.data.train_source(cfg.prior.n_frames, cfg.seed)?;
        Ok(Trainer { adam: AdamState::new(&sizes), model, iter: 0, source, cfg })
    }

    /// Resume from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = TrainConfig::from_kv(&strip_prefix(&ckpt.meta, "config."))?;
        let mut t = Trainer::new(cfg)?;
        ckpt.restore_model(&mut t.model)?;
        t.iter = kv::get(&ckpt.meta, "train.iter")?;
        t.adam.t = kv::get(&ckpt.meta, "train.adam_t")?;
        for (k, (name, p)) in t.model.named_params().iter().enumerate() {
            for (slot, prefix) in [(&mut t.adam.m[k], "adam.m."), (&mut t.adam.v[k], "adam.v.")] {
                let key = format!("{prefix}{name}");
                let tensor = ckpt.tensor(&key).ok_or_else(|| Error::Malformed(format!("checkpoint lacks {key}")))?;
                if tensor.data.len() != p.value.len() {
                    return Err(Error::Shape(format!("{key}: {} values, expected {}", tensor.data.len(), p.value.len())));
                }
                slot.clone_from(&tensor.data);
            }
        }
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors = Checkpoint::model_tensors(&self.model);
        for (k, (name, p)) in self.model.named_params().iter().enumerate() {
            for (slot, prefix) in [(&self.adam.m[k], "adam.m."), (&self.adam.v[k], "adam.v.")] {
                tensors.push(NamedTensor { name: format!("{prefix}{name}"), dtype: f64::DTYPE_CODE, dims: p.dims.clone(), data: slot.clone() });
            }
        }
        let mut meta: KvMap = self.cfg.to_kv().into_iter().map(|(k, v)| (format!("config.{k}"), v)).collect();
        meta.insert("train.iter".into(), self.iter.to_string());
        meta.insert("train.adam_t".into(), self.adam.t.to_string());
        meta.insert("train.dtype".into(), T::DTYPE_CODE.to_string());
        Checkpoint { tensors, meta }
    }

    /// One optimization step on the batch for the current iteration.
    pub fn step(&mut self) -> Result<LogRow> {
        let k = self.iter;
        let (b, n) = (self.cfg.batch_videos, self.cfg.prior.n_frames);
        let batch = self.source.batch(k, b)?;
        let lr = lr_schedule(k, &self.cfg);
        self.model.zero_grad();
        let row = self.forward_backward(&batch.frames, b, n, derive_seed(self.cfg.seed, &[tag::REPARAM, k]))?;
        adam_step(&mut self.model.named_params_mut(), &mut self.adam, lr)?;
        self.iter += 1;
        Ok(LogRow { iter: self.iter, lr, ..row })
    }

    /// Accumulate gradients of the negative ELBO into the model parameters
    /// and return the (pre-update) metrics.
    pub fn forward_backward(&mut self, frames: &[f32], b: usize, n: usize, noise_seed: u64) -> Result<LogRow> {
        let beta = self.cfg.beta;
        let (mu, lv) = self.model.encode_raw(frames, b, n, Mode::Train)?;
        let post = to_posterior(&mu, &lv, b, n)?;
        let (kl, entropy, static_ce, temporal_ce) = kl_for_variant(&post, &self.cfg.prior, self.cfg.variant)?;
        let sample = reparam_sample(&post, noise_seed);
        let logits = self.model.decode_logits(&sample.h, b, n, Mode::Train)?;
        let probs: Vec<T> = logits.data.iter().map(|&z| sigmoid(z)).collect();
        let recon = bernoulli_recon_loglik(&probs, frames, b)?;
        let elbo = recon - beta * kl.value;
        if !elbo.is_finite() {
            return Err(Error::NonFinite(format!("ELBO at iteration {} (recon {recon}, kl {})", self.iter + 1, kl.value)));
        }
        // d(-recon)/d(logit) = (p - x) / B; zero where the probability clamp is active.
        let inv_b = 1.0 / b as f64;
        let d_logits: Vec<T> = probs
            .iter()
            .zip(frames)
            .map(|(&p, &x)| {
                let p = p.to_f64();
                if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                    T::from_f64((p - x as f64) * inv_b)
                } else {
                    T::zero()
                }
            })
            .collect();
        let dz = self.model.decoder.backward(Act::from_vec(logits.c, logits.n, logits.h, logits.w, d_logits));
        let (count, f) = (b * n, post.width);
        let mut d_mu = vec![0.0; count * f];
        let mut d_lv = vec![0.0; count * f];
        for i in 0..count {
            for j in 0..f {
                let q = i * f + j;
                let dh = dz.data[j * count + i].to_f64();
                d_mu[q] = dh + beta * kl.d_mu[q];
                d_lv[q] = dh * 0.5 * (0.5 * post.log_var[q]).exp() * sample.eps[q] + beta * kl.d_log_var[q];
            }
        }
        self.model
            .encoder
            .backward(&from_posterior_layout(&d_mu, count, f), &from_posterior_layout(&d_lv, count, f));
        Ok(LogRow { iter: self.iter + 1, lr: 0.0, elbo, recon, kl: kl.value, entropy, static_ce, temporal_ce })
    }

    /// Run to `cfg.iterations`, appending logged rows to `log` and writing
    /// checkpoints into `ckpt_dir` when given.
    pub fn run(&mut self, log: &mut dyn Write, ckpt_dir: Option<&Path>) -> Result<Vec<LogRow>> {
        let mut rows = Vec::new();
        while self.iter < self.cfg.iterations {
            let row = self.step()?;
            if row.iter % self.cfg.log_every == 0 || row.iter == self.cfg.iterations {
                writeln!(log, "{}", row.csv())?;
                rows.push(row);
            }
            if let Some(dir) = ckpt_dir {
                let every = self.cfg.checkpoint_every;
                if every > 0 && self.iter % every == 0 && self.iter < self.cfg.iterations {
                    self.checkpoint().save(&checkpoint_path(dir, self.iter))?;
                }
            }
        }
        log.flush()?;
        if let Some(dir) = ckpt_dir {
            self.checkpoint().save(&dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(rows)
    }
}

pub const FINAL_CHECKPOINT: &str = "model.fsvae";

pub fn checkpoint_path(dir: &Path, iter: u64) -> PathBuf {
    dir.join(format!("ckpt_{iter:07}.fsvae"))
}

fn strip_prefix(m: &KvMap, prefix: &str) -> KvMap {
    m.iter().filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_string(), v.clone()))).collect()
}

/// Training configuration stored in a checkpoint.
pub fn checkpoint_config(ckpt: &Checkpoint) -> Result<TrainConfig> {
    TrainConfig::from_kv(&strip_prefix(&ckpt.meta, "config."))
}

/// Load a checkpoint's network for inference in the requested precision.
pub fn load_model<T: Real>(ckpt: &Checkpoint) -> Result<(TrainConfig, Model<T>)> {
    let cfg = checkpoint_config(ckpt)?;
    let mut model = Model::new(cfg.net_config(), cfg.seed)?;
    ckpt.restore_model(&mut model)?;
    Ok((cfg, model))
}
