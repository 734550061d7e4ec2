//! Analytic KL terms and the beta-weighted sequence ELBO.
//!
//! Every term is a per-video average over the batch. Each KL term also has a
//! gradient form returning derivatives with respect to the posterior mean and
//! log-variance.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::prior::{PriorConfig, StaticPriorConstant};
use crate::real::Real;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Probability clamp applied before the Bernoulli likelihood.
pub const PROB_EPS: f64 = 1e-6;

/// Per-frame diagonal Gaussian posterior for a batch of videos.
///
/// Layout is `[batch, n_frames, width]`; the first `f_s` features of each frame
/// belong to the static factor, the rest to the temporal factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub batch: usize,
    pub n_frames: usize,
    pub width: usize,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl PosteriorParams {
    pub fn new(batch: usize, n_frames: usize, width: usize, mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        let p = PosteriorParams { batch, n_frames, width, mu, log_var };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.batch * self.n_frames * self.width;
        if self.mu.len() != len || self.log_var.len() != len {
            return Err(Error::Shape(format!(
                "posterior [{}, {}, {}] needs {len} entries, got mu {} / log_var {}",
                self.batch,
                self.n_frames,
                self.width,
                self.mu.len(),
                self.log_var.len()
            )));
        }
        if self.batch == 0 || self.n_frames == 0 {
            return Err(Error::Shape("posterior needs at least one video and one frame".into()));
        }
        if let Some(v) = self.mu.iter().chain(&self.log_var).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("posterior entry {v}")));
        }
        if self.log_var.iter().any(|lv| lv.exp() <= 0.0) {
            return Err(Error::Invalid("posterior variance underflows to zero".into()));
        }
        Ok(())
    }

    #[inline]
    fn idx(&self, b: usize, i: usize, j: usize) -> usize {
        (b * self.n_frames + i) * self.width + j
    }

    /// Features `start..start + width` of every frame.
    pub fn slice(&self, start: usize, width: usize) -> PosteriorParams {
        assert!(start + width <= self.width, "slice out of range");
        let mut mu = Vec::with_capacity(self.batch * self.n_frames * width);
        let mut log_var = Vec::with_capacity(mu.capacity());
        for b in 0..self.batch {
            for i in 0..self.n_frames {
                let k = self.idx(b, i, start);
                mu.extend_from_slice(&self.mu[k..k + width]);
                log_var.extend_from_slice(&self.log_var[k..k + width]);
            }
        }
        PosteriorParams { batch: self.batch, n_frames: self.n_frames, width, mu, log_var }
    }

    /// Static and temporal slices for a factored layout.
    pub fn split(&self, cfg: &PriorConfig) -> Result<(PosteriorParams, PosteriorParams)> {
        if self.width != cfg.total_width() {
            return Err(Error::Shape(format!(
                "posterior width {} does not match f_s + f_t = {}",
                self.width,
                cfg.total_width()
            )));
        }
        Ok((self.slice(0, cfg.f_s), self.slice(cfg.f_s, cfg.f_t)))
    }
}

/// A scalar term with its gradient w.r.t. the posterior it was evaluated on.
#[derive(Debug, Clone)]
pub struct TermGrad {
    pub value: f64,
    pub d_mu: Vec<f64>,
    pub d_log_var: Vec<f64>,
}

impl TermGrad {
    fn zeros(post: &PosteriorParams) -> Self {
        TermGrad { value: 0.0, d_mu: vec![0.0; post.mu.len()], d_log_var: vec![0.0; post.mu.len()] }
    }

    /// `self += scale * other`, where `other` covers features
    /// `offset..offset + other_width` of this layout.
    fn add_scaled(&mut self, other: &TermGrad, scale: f64, width: usize, offset: usize, other_width: usize) {
        self.value += scale * other.value;
        if other_width == 0 {
            return;
        }
        for (row, (om, ol)) in other.d_mu.chunks(other_width).zip(other.d_log_var.chunks(other_width)).enumerate() {
            let base = row * width + offset;
            for j in 0..other_width {
                self.d_mu[base + j] += scale * om[j];
                self.d_log_var[base + j] += scale * ol[j];
            }
        }
    }
}

/// Model family, each with its own prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Factored,
    Slow,
    Vae,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Factored => "factored",
            Variant::Slow => "slow",
            Variant::Vae => "vae",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factored" => Ok(Variant::Factored),
            "slow" => Ok(Variant::Slow),
            "vae" => Ok(Variant::Vae),
            other => Err(Error::Invalid(format!("unknown variant {other:?} (factored|slow|vae)"))),
        }
    }
}

/// Decomposed loss record, per-video averages over the batch.
///
/// For `Vae`, `temporal_ce` holds the per-frame standard-normal cross-entropy
/// so that `kl = entropy - static_ce - temporal_ce` holds for every variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub recon_loglik: f64,
    pub entropy: f64,
    pub static_ce: f64,
    pub temporal_ce: f64,
    pub kl: f64,
    pub beta: f64,
    pub elbo_value: f64,
}

/// `E_q[log q(h|x)]` over whole sequences.
pub fn entropy_term(post: &PosteriorParams) -> f64 {
    entropy_term_grad(post).value
}

pub fn entropy_term_grad(post: &PosteriorParams) -> TermGrad {
    let mut g = TermGrad::zeros(post);
    let b = post.batch as f64;
    let nf = (post.n_frames * post.width) as f64;
    let s: f64 = post.log_var.iter().map(|lv| 1.0 + lv).sum();
    g.value = -0.5 * nf * LN_2PI - 0.5 * s / b;
    g.d_log_var.iter_mut().for_each(|d| *d = -0.5 / b);
    g
}

/// `E_q[log p(h^t)]` under the random-walk prior with step variance `sigma2`.
fn random_walk_ce_grad(post: &PosteriorParams, sigma2: f64) -> TermGrad {
    let mut g = TermGrad::zeros(post);
    let (n, f) = (post.n_frames, post.width);
    if f == 0 {
        return g;
    }
    let inv_b = 1.0 / post.batch as f64;
    let ff = f as f64;
    let mut total = 0.0;
    for b in 0..post.batch {
        let mut first = 0.0;
        let mut steps = 0.0;
        for j in 0..f {
            let k = post.idx(b, 0, j);
            let var = post.log_var[k].exp();
            first += post.mu[k].powi(2) + var;
            g.d_mu[k] -= post.mu[k] * inv_b;
            g.d_log_var[k] -= 0.5 * var * inv_b;
        }
        for i in 1..n {
            for j in 0..f {
                let (k, kp) = (post.idx(b, i, j), post.idx(b, i - 1, j));
                let (v, vp) = (post.log_var[k].exp(), post.log_var[kp].exp());
                let d = post.mu[k] - post.mu[kp];
                steps += d * d + v + vp;
                g.d_mu[k] -= d / sigma2 * inv_b;
                g.d_mu[kp] += d / sigma2 * inv_b;
                g.d_log_var[k] -= 0.5 * v / sigma2 * inv_b;
                g.d_log_var[kp] -= 0.5 * vp / sigma2 * inv_b;
            }
        }
        total += -0.5 * ff * LN_2PI - 0.5 * first
            - 0.5 * (n as f64 - 1.0) * ff * (2.0 * PI * sigma2).ln()
            - 0.5 * steps / sigma2;
    }
    g.value = total * inv_b;
    g
}

/// `E_q[log p(h^t)]` for the temporal slice.
pub fn temporal_cross_entropy(post_t: &PosteriorParams, cfg: &PriorConfig) -> Result<f64> {
    Ok(temporal_cross_entropy_grad(post_t, cfg)?.value)
}

pub fn temporal_cross_entropy_grad(post_t: &PosteriorParams, cfg: &PriorConfig) -> Result<TermGrad> {
    post_t.validate()?;
    cfg.validate()?;
    Ok(random_walk_ce_grad(post_t, cfg.sigma2_t))
}

/// `E_q[log p(h^s)]` for the static slice, including `F log C`.
pub fn static_cross_entropy(post_s: &PosteriorParams, cfg: &PriorConfig) -> Result<f64> {
    Ok(static_cross_entropy_grad(post_s, cfg)?.value)
}

pub fn static_cross_entropy_grad(post_s: &PosteriorParams, cfg: &PriorConfig) -> Result<TermGrad> {
    post_s.validate()?;
    cfg.validate()?;
    let mut g = TermGrad::zeros(post_s);
    let (n, f) = (post_s.n_frames, post_s.width);
    if f == 0 {
        return Ok(g);
    }
    let nf = n as f64;
    let s2 = cfg.sigma2_s;
    let log_c = StaticPriorConstant::new(n, s2).log_c;
    let inv_b = 1.0 / post_s.batch as f64;
    // Coefficients of E[mean of squares] and E[square of mean].
    let a_sq = nf / (2.0 * s2);
    let a_mean = nf / (2.0 * (s2 + nf)) - nf / (2.0 * s2);
    let mut total = 0.0;
    for b in 0..post_s.batch {
        let mut video = f as f64 * log_c;
        for j in 0..f {
            let mut sum_sq = 0.0;
            let mut sum_mu = 0.0;
            let mut cross = 0.0;
            for i in 0..n {
                let k = post_s.idx(b, i, j);
                let m = post_s.mu[k];
                sum_sq += m * m + post_s.log_var[k].exp();
                // sum_{i' < i} mu_{i'} * mu_i
                cross += sum_mu * m;
                sum_mu += m;
            }
            let e_sq = sum_sq / nf;
            let e_mean_sq = e_sq / nf + 2.0 / (nf * nf) * cross;
            video += -a_sq * e_sq - a_mean * e_mean_sq;
            for i in 0..n {
                let k = post_s.idx(b, i, j);
                let m = post_s.mu[k];
                let var = post_s.log_var[k].exp();
                // d e_sq / d mu_i = 2 mu_i / N; d e_mean_sq / d mu_i = 2 sum_mu / N^2
                let d_mu = -a_sq * 2.0 * m / nf - a_mean * 2.0 * sum_mu / (nf * nf);
                let d_var = -a_sq / nf - a_mean / (nf * nf);
                g.d_mu[k] += d_mu * inv_b;
                g.d_log_var[k] += d_var * var * inv_b;
            }
        }
        total += video;
    }
    g.value = total * inv_b;
    Ok(g)
}

/// KL from the posterior to the factored prior.
pub fn kl_factored(post: &PosteriorParams, cfg: &PriorConfig) -> Result<f64> {
    Ok(kl_factored_grad(post, cfg)?.value)
}

pub fn kl_factored_grad(post: &PosteriorParams, cfg: &PriorConfig) -> Result<TermGrad> {
    let (s, t) = post.split(cfg)?;
    if post.n_frames != cfg.n_frames {
        return Err(Error::Shape(format!("posterior has {} frames, prior {}", post.n_frames, cfg.n_frames)));
    }
    let mut g = entropy_term_grad(post);
    let sg = static_cross_entropy_grad(&s, cfg)?;
    let tg = temporal_cross_entropy_grad(&t, cfg)?;
    g.add_scaled(&sg, -1.0, post.width, 0, cfg.f_s);
    g.add_scaled(&tg, -1.0, post.width, cfg.f_s, cfg.f_t);
    Ok(g)
}

/// KL to the per-frame `N(0, I)` prior.
pub fn kl_standard_normal(post: &PosteriorParams) -> f64 {
    kl_standard_normal_grad(post).value
}

pub fn kl_standard_normal_grad(post: &PosteriorParams) -> TermGrad {
    let mut g = TermGrad::zeros(post);
    let inv_b = 1.0 / post.batch as f64;
    let mut total = 0.0;
    for k in 0..post.mu.len() {
        let (m, lv) = (post.mu[k], post.log_var[k]);
        let var = lv.exp();
        total += 0.5 * (m * m + var - 1.0 - lv);
        g.d_mu[k] = m * inv_b;
        g.d_log_var[k] = 0.5 * (var - 1.0) * inv_b;
    }
    g.value = total * inv_b;
    g
}

/// KL to the random-walk prior on every feature.
pub fn kl_slow(post: &PosteriorParams, cfg: &PriorConfig) -> Result<f64> {
    Ok(kl_slow_grad(post, cfg)?.value)
}

pub fn kl_slow_grad(post: &PosteriorParams, cfg: &PriorConfig) -> Result<TermGrad> {
    post.validate()?;
    cfg.validate()?;
    let mut g = entropy_term_grad(post);
    let tg = random_walk_ce_grad(post, cfg.sigma2_t);
    g.add_scaled(&tg, -1.0, post.width, 0, post.width);
    Ok(g)
}

/// Bernoulli log-likelihood of `frames` under pixel probabilities `probs`,
/// summed over pixels and averaged over the `batch` videos.
pub fn bernoulli_recon_loglik<T: Real>(probs: &[T], frames: &[f32], batch: usize) -> Result<f64> {
    if probs.len() != frames.len() {
        return Err(Error::Shape(format!(
            "probabilities have {} entries, frames {}",
            probs.len(),
            frames.len()
        )));
    }
    if batch == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut total = 0.0;
    for (&p, &x) in probs.iter().zip(frames) {
        let p = p.to_f64().clamp(PROB_EPS, 1.0 - PROB_EPS);
        let x = x as f64;
        total += x * p.ln() + (1.0 - x) * (1.0 - p).ln();
    }
    Ok(total / batch as f64)
}

/// Derivative of [`bernoulli_recon_loglik`] with respect to each probability.
/// Zero where the clamp is active.
pub fn bernoulli_recon_grad<T: Real>(probs: &[T], frames: &[f32], batch: usize) -> Vec<f64> {
    let inv_b = 1.0 / batch as f64;
    probs
        .iter()
        .zip(frames)
        .map(|(&p, &x)| {
            let p = p.to_f64();
            if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                return 0.0;
            }
            let x = x as f64;
            (x / p - (1.0 - x) / (1.0 - p)) * inv_b
        })
        .collect()
}

/// KL for the given variant with its gradient, plus the entropy/cross-entropy split.
pub fn kl_for_variant(post: &PosteriorParams, cfg: &PriorConfig, variant: Variant) -> Result<(TermGrad, f64, f64, f64)> {
    match variant {
        Variant::Factored => {
            let g = kl_factored_grad(post, cfg)?;
            let (s, t) = post.split(cfg)?;
            let ent = entropy_term(post);
            let sce = static_cross_entropy(&s, cfg)?;
            let tce = temporal_cross_entropy(&t, cfg)?;
            Ok((g, ent, sce, tce))
        }
        Variant::Slow => {
            let g = kl_slow_grad(post, cfg)?;
            let ent = entropy_term(post);
            let tce = random_walk_ce_grad(post, cfg.sigma2_t).value;
            Ok((g, ent, 0.0, tce))
        }
        Variant::Vae => {
            post.validate()?;
            let g = kl_standard_normal_grad(post);
            let ent = entropy_term(post);
            Ok((g.clone(), ent, 0.0, ent - g.value))
        }
    }
}

/// The beta-weighted ELBO and its decomposition.
pub fn elbo<T: Real>(
    post: &PosteriorParams,
    probs: &[T],
    frames: &[f32],
    beta: f64,
    cfg: &PriorConfig,
    variant: Variant,
) -> Result<ElboTerms> {
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("beta must be positive, got {beta}")));
    }
    let recon = bernoulli_recon_loglik(probs, frames, post.batch)?;
    let (g, entropy, static_ce, temporal_ce) = kl_for_variant(post, cfg, variant)?;
    Ok(ElboTerms {
        recon_loglik: recon,
        entropy,
        static_ce,
        temporal_ce,
        kl: g.value,
        beta,
        elbo_value: recon - beta * g.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_post(b: usize, n: usize, f: usize, seed: u64) -> PosteriorParams {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let len = b * n * f;
        let mu = (0..len).map(|_| r.random_range(-1.5..1.5)).collect();
        let lv = (0..len).map(|_| r.random_range(-4.0..0.5)).collect();
        PosteriorParams::new(b, n, f, mu, lv).unwrap()
    }

    fn cfg(n: usize, f_s: usize, f_t: usize) -> PriorConfig {
        PriorConfig { n_frames: n, f_s, f_t, ..PriorConfig::default() }
    }

    /// Gaussian negative entropy of one frame, written independently.
    fn frame_neg_entropy(log_var: &[f64]) -> f64 {
        log_var.iter().map(|lv| -0.5 * (2.0 * PI * std::f64::consts::E * lv.exp()).ln()).sum()
    }

    #[test]
    fn entropy_unit_gaussian() {
        let p = PosteriorParams::new(1, 1, 1, vec![0.0], vec![0.0]).unwrap();
        assert!((entropy_term(&p) - (-1.418_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn entropy_matches_per_frame_oracle_and_ignores_mu() {
        let p = random_post(3, 5, 4, 1);
        let want: f64 = p.log_var.chunks(4).map(frame_neg_entropy).sum::<f64>() / 3.0;
        assert!((entropy_term(&p) - want).abs() < 1e-10);
        let mut q = p.clone();
        q.mu.iter_mut().for_each(|m| *m += 3.0);
        assert_eq!(entropy_term(&p).to_bits(), entropy_term(&q).to_bits());
    }

    #[test]
    fn entropy_is_additive_over_split() {
        let p = random_post(2, 16, 4, 2);
        let c = cfg(16, 2, 2);
        let (s, t) = p.split(&c).unwrap();
        assert!((entropy_term(&p) - entropy_term(&s) - entropy_term(&t)).abs() < 1e-10);
    }

    #[test]
    fn temporal_single_frame() {
        let p = PosteriorParams::new(1, 1, 1, vec![0.0], vec![0.0]).unwrap();
        let v = temporal_cross_entropy(&p, &cfg(1, 0, 1)).unwrap();
        assert!((v - (-1.418_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn temporal_shift_changes_only_first_frame_term() {
        let c = cfg(6, 0, 2);
        let p = random_post(1, 6, 2, 3);
        let mut q = p.clone();
        q.mu.iter_mut().for_each(|m| *m += 0.7);
        let first = |p: &PosteriorParams| -> f64 {
            (0..2).map(|j| -0.5 * LN_2PI - 0.5 * (p.mu[j].powi(2) + p.log_var[j].exp())).sum()
        };
        let rest_p = temporal_cross_entropy(&p, &c).unwrap() - first(&p);
        let rest_q = temporal_cross_entropy(&q, &c).unwrap() - first(&q);
        assert!((rest_p - rest_q).abs() < 1e-12 * rest_p.abs().max(1.0));
    }

    #[test]
    fn static_single_frame_matches_gaussian_cross_entropy() {
        let c = cfg(1, 1, 0);
        let p = PosteriorParams::new(1, 1, 1, vec![0.0], vec![0.0]).unwrap();
        let v = static_cross_entropy(&p, &c).unwrap();
        // value from an independent 30-digit evaluation
        assert!((v - (-1.418_963_203_581_751_8)).abs() < 1e-12, "{v}");
        let s = 1.0 + c.sigma2_s;
        let want = -0.5 * (2.0 * PI * s).ln() - 0.5 / s;
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn static_is_frame_permutation_invariant() {
        let c = cfg(8, 3, 0);
        let p = random_post(1, 8, 3, 4);
        let mut q = p.clone();
        let perm = [3, 7, 0, 5, 1, 6, 2, 4];
        for (dst, &src) in perm.iter().enumerate() {
            for j in 0..3 {
                q.mu[dst * 3 + j] = p.mu[src * 3 + j];
                q.log_var[dst * 3 + j] = p.log_var[src * 3 + j];
            }
        }
        let a = static_cross_entropy(&p, &c).unwrap();
        let b = static_cross_entropy(&q, &c).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} {b}");
    }

    #[test]
    fn kl_standard_normal_values() {
        let p = PosteriorParams::new(1, 2, 3, vec![0.0; 6], vec![0.0; 6]).unwrap();
        assert_eq!(kl_standard_normal(&p), 0.0);
        let p = PosteriorParams::new(1, 1, 1, vec![1.0], vec![0.0]).unwrap();
        assert!((kl_standard_normal(&p) - 0.5).abs() < 1e-15);
        let p = PosteriorParams::new(1, 1, 1, vec![0.0], vec![2f64.ln()]).unwrap();
        assert!((kl_standard_normal(&p) - 0.153_426_409_720_027_35).abs() < 1e-12);
    }

    #[test]
    fn collapse_identities() {
        let p = random_post(2, 16, 4, 5);
        let slow = kl_slow(&p, &cfg(16, 0, 4)).unwrap();
        let fac = kl_factored(&p, &cfg(16, 0, 4)).unwrap();
        assert!((slow - fac).abs() < 1e-12 * slow.abs().max(1.0));

        let p1 = random_post(3, 1, 4, 6);
        let sn = kl_standard_normal(&p1);
        let s1 = kl_slow(&p1, &cfg(1, 0, 4)).unwrap();
        assert!((sn - s1).abs() < 1e-12);

        // empty static factor: entropy minus temporal only
        let c = cfg(16, 0, 4);
        let want = entropy_term(&p) - temporal_cross_entropy(&p, &c).unwrap();
        assert!((fac - want).abs() < 1e-12 * want.abs());
        let c = cfg(16, 4, 0);
        let want = entropy_term(&p) - static_cross_entropy(&p, &c).unwrap();
        assert!((kl_factored(&p, &c).unwrap() - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn kl_factored_nonnegative() {
        for s in 0..10_000u64 {
            let p = random_post(1, 4, 2, 1000 + s);
            assert!(kl_factored(&p, &cfg(4, 1, 1)).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn factored_rejects_inconsistent_width() {
        let p = random_post(1, 4, 3, 7);
        assert!(kl_factored(&p, &cfg(4, 2, 2)).is_err());
    }

    fn fd_check(post: &PosteriorParams, f: &dyn Fn(&PosteriorParams) -> f64, g: &TermGrad) {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..post.mu.len() {
            for which in 0..2 {
                let mut a = post.clone();
                let mut b = post.clone();
                let (va, vb) = if which == 0 { (&mut a.mu, &mut b.mu) } else { (&mut a.log_var, &mut b.log_var) };
                va[k] += h;
                vb[k] -= h;
                let num = (f(&a) - f(&b)) / (2.0 * h);
                let ana = if which == 0 { g.d_mu[k] } else { g.d_log_var[k] };
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst <= 1e-5, "worst rel err {worst}");
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let c = cfg(5, 2, 2);
        let p = random_post(2, 5, 4, 8);
        fd_check(&p, &|q| kl_factored(q, &c).unwrap(), &kl_factored_grad(&p, &c).unwrap());
        fd_check(&p, &|q| kl_slow(q, &c).unwrap(), &kl_slow_grad(&p, &c).unwrap());
        fd_check(&p, &kl_standard_normal, &kl_standard_normal_grad(&p));
    }

    #[test]
    fn bernoulli_reference_cases() {
        let n = 2 * 4 * 4;
        let zeros = vec![0f32; n];
        let v = bernoulli_recon_loglik(&vec![1e-6f64; n], &zeros, 1).unwrap();
        assert!(v <= 0.0 && (v - n as f64 * (1.0 - 1e-6f64).ln()).abs() < 1e-12);
        let ones = vec![1f32; n];
        let v = bernoulli_recon_loglik(&vec![0.5f64; n], &ones, 1).unwrap();
        assert!((v - n as f64 * 0.5f64.ln()).abs() < 1e-12);
        assert!(bernoulli_recon_loglik(&vec![0.5f64; n - 1], &ones, 1).is_err());
    }

    #[test]
    fn bernoulli_matches_scalar_loop_and_gradient() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let n = 3 * 50;
        let probs: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
        let frames: Vec<f32> = (0..n).map(|_| r.random_range(0.0f32..1.0)).collect();
        let mut want = 0.0;
        for i in 0..n {
            let x = frames[i] as f64;
            want += x * probs[i].ln() + (1.0 - x) * (1.0 - probs[i]).ln();
        }
        want /= 3.0;
        let got = bernoulli_recon_loglik(&probs, &frames, 3).unwrap();
        assert!((got - want).abs() < 1e-9);
        let grad = bernoulli_recon_grad(&probs, &frames, 3);
        let h = 1e-6;
        for k in 0..n {
            let mut a = probs.clone();
            let mut b = probs.clone();
            a[k] += h;
            b[k] -= h;
            let num = (bernoulli_recon_loglik(&a, &frames, 3).unwrap() - bernoulli_recon_loglik(&b, &frames, 3).unwrap()) / (2.0 * h);
            assert!((num - grad[k]).abs() / num.abs().max(1e-3) < 1e-5);
        }
    }

    #[test]
    fn elbo_linearity_in_beta() {
        let c = cfg(4, 1, 1);
        let p = random_post(2, 4, 2, 10);
        let probs = vec![0.3f64; 2 * 4 * 9];
        let frames = vec![0.2f32; 2 * 4 * 9];
        let e1 = elbo(&p, &probs, &frames, 1.0, &c, Variant::Factored).unwrap();
        let e2 = elbo(&p, &probs, &frames, 2.0, &c, Variant::Factored).unwrap();
        assert!((e2.elbo_value - e1.elbo_value + e1.kl).abs() < 1e-10);
        assert!((e1.elbo_value - (e1.recon_loglik - e1.kl)).abs() < 1e-12);
        for v in [Variant::Factored, Variant::Slow, Variant::Vae] {
            let t = elbo(&p, &probs, &frames, 4.0, &c, v).unwrap();
            assert!(t.elbo_value <= t.recon_loglik);
            assert!((t.kl - (t.entropy - t.static_ce - t.temporal_ce)).abs() < 1e-9);
        }
        assert!(elbo(&p, &probs, &frames, 0.0, &c, Variant::Vae).is_err());
    }
}
