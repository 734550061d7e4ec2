//! Factored sequence prior over per-frame latents.
//!
//! The static factor clusters all frames of a video around one video-level
//! draw `h0 ~ N(0, I)` with `h_i ~ N(h0, sigma2_s I)`; the temporal factor is a
//! first-order Gaussian random walk started at `N(0, I)` with step variance
//! `sigma2_t`. Both densities are evaluated exactly in log space.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::elbo::PosteriorParams;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hyper-parameters of the factored prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub sigma2_s: f64,
    pub sigma2_t: f64,
    pub f_s: usize,
    pub f_t: usize,
    pub n_frames: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { sigma2_s: 0.01, sigma2_t: 0.01, f_s: 2, f_t: 2, n_frames: 16 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_s > 0.0 && self.sigma2_s.is_finite()) {
            return Err(Error::Config(format!("sigma2_s must be positive, got {}", self.sigma2_s)));
        }
        if !(self.sigma2_t > 0.0 && self.sigma2_t.is_finite()) {
            return Err(Error::Config(format!("sigma2_t must be positive, got {}", self.sigma2_t)));
        }
        if self.n_frames == 0 {
            return Err(Error::Config("n_frames must be at least 1".into()));
        }
        if self.f_s + self.f_t == 0 {
            return Err(Error::Config("f_s + f_t must be at least 1".into()));
        }
        Ok(())
    }

    pub fn total_width(&self) -> usize {
        self.f_s + self.f_t
    }

    /// Copy with the factor widths replaced.
    pub fn with_widths(self, f_s: usize, f_t: usize) -> Self {
        PriorConfig { f_s, f_t, ..self }
    }
}

/// A latent sequence `h_1..h_N`, row-major `[n_frames, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeq {
    pub n_frames: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl LatentSeq {
    pub fn new(n_frames: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_frames * width {
            return Err(Error::Shape(format!(
                "latent sequence needs {} values for [{n_frames}, {width}], got {}",
                n_frames * width,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("latent entry {v}")));
        }
        Ok(LatentSeq { n_frames, width, values })
    }

    pub fn zeros(n_frames: usize, width: usize) -> Self {
        LatentSeq { n_frames, width, values: vec![0.0; n_frames * width] }
    }

    #[inline]
    pub fn get(&self, frame: usize, feature: usize) -> f64 {
        self.values[frame * self.width + feature]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.width..(frame + 1) * self.width]
    }

    /// Columns `start..start + width` of every frame.
    pub fn columns(&self, start: usize, width: usize) -> LatentSeq {
        assert!(start + width <= self.width);
        let mut values = Vec::with_capacity(self.n_frames * width);
        for i in 0..self.n_frames {
            values.extend_from_slice(&self.frame(i)[start..start + width]);
        }
        LatentSeq { n_frames: self.n_frames, width, values }
    }

    /// Frames concatenated feature-wise: `[self | other]`.
    pub fn concat(&self, other: &LatentSeq) -> Result<LatentSeq> {
        if self.n_frames != other.n_frames {
            return Err(Error::Shape(format!(
                "frame counts differ: {} vs {}",
                self.n_frames, other.n_frames
            )));
        }
        let width = self.width + other.width;
        let mut values = Vec::with_capacity(self.n_frames * width);
        for i in 0..self.n_frames {
            values.extend_from_slice(self.frame(i));
            values.extend_from_slice(other.frame(i));
        }
        Ok(LatentSeq { n_frames: self.n_frames, width, values })
    }
}

/// Log of the per-feature normalizing constant of the static prior density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticPriorConstant {
    pub log_c: f64,
    pub n_frames: usize,
    pub sigma2_s: f64,
}

impl StaticPriorConstant {
    /// The frames of one feature are jointly Gaussian with covariance
    /// `sigma2_s I + 1 1^T`, whose determinant is `sigma2_s^(N-1) (sigma2_s + N)`.
    pub fn new(n_frames: usize, sigma2_s: f64) -> Self {
        let n = n_frames as f64;
        let log_c = -0.5 * n * LN_2PI - 0.5 * (n - 1.0) * sigma2_s.ln() - 0.5 * (sigma2_s + n).ln();
        StaticPriorConstant { log_c, n_frames, sigma2_s }
    }
}

/// Which prior the KL is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorVariant {
    /// Static factor + random-walk temporal factor.
    Factored,
    /// Random walk on every feature.
    Slow,
    /// Independent `N(0, I)` per frame.
    StandardNormal,
}

impl std::str::FromStr for PriorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factored" => Ok(PriorVariant::Factored),
            "slow" => Ok(PriorVariant::Slow),
            "standard-normal" | "vae" => Ok(PriorVariant::StandardNormal),
            other => Err(Error::Invalid(format!("unknown prior variant {other:?}"))),
        }
    }
}

fn check_width(h: &LatentSeq, cfg: &PriorConfig, width: usize, what: &str) -> Result<()> {
    if h.n_frames != cfg.n_frames || h.width != width {
        return Err(Error::Shape(format!(
            "{what} expects [{}, {width}], got [{}, {}]",
            cfg.n_frames, h.n_frames, h.width
        )));
    }
    Ok(())
}

/// Draw a static-factor sequence `[n_frames, f_s]`.
pub fn sample_static_prior(cfg: &PriorConfig, seed: u64) -> Result<LatentSeq> {
    cfg.validate()?;
    let sd = cfg.sigma2_s.sqrt();
    let mut h = LatentSeq::zeros(cfg.n_frames, cfg.f_s);
    for j in 0..cfg.f_s {
        let h0: f64 = rng::stream(seed, &[tag::STATIC_PRIOR, u64::MAX, j as u64]).sample(StandardNormal);
        for i in 0..cfg.n_frames {
            let e: f64 = rng::stream(seed, &[tag::STATIC_PRIOR, i as u64, j as u64]).sample(StandardNormal);
            h.values[i * cfg.f_s + j] = h0 + sd * e;
        }
    }
    Ok(h)
}

/// Draw a temporal-factor sequence `[n_frames, f_t]`.
pub fn sample_temporal_prior(cfg: &PriorConfig, seed: u64) -> Result<LatentSeq> {
    cfg.validate()?;
    let sd = cfg.sigma2_t.sqrt();
    let mut h = LatentSeq::zeros(cfg.n_frames, cfg.f_t);
    for j in 0..cfg.f_t {
        let mut prev = 0.0;
        for i in 0..cfg.n_frames {
            let e: f64 = rng::stream(seed, &[tag::TEMPORAL_PRIOR, i as u64, j as u64]).sample(StandardNormal);
            let v = if i == 0 { e } else { prev + sd * e };
            h.values[i * cfg.f_t + j] = v;
            prev = v;
        }
    }
    Ok(h)
}

fn random_walk_log_pdf(h: &LatentSeq, sigma2: f64) -> f64 {
    let (n, f) = (h.n_frames, h.width);
    if f == 0 {
        return 0.0;
    }
    let mut first = 0.0;
    for j in 0..f {
        first += h.get(0, j).powi(2);
    }
    let mut steps = 0.0;
    for i in 1..n {
        for j in 0..f {
            steps += (h.get(i, j) - h.get(i - 1, j)).powi(2);
        }
    }
    let f = f as f64;
    -0.5 * f * LN_2PI - 0.5 * first
        - 0.5 * (n as f64 - 1.0) * f * (2.0 * PI * sigma2).ln()
        - 0.5 * steps / sigma2
}

/// `log p(h^t)` under the random walk.
pub fn log_pdf_temporal(h: &LatentSeq, cfg: &PriorConfig) -> Result<f64> {
    check_width(h, cfg, cfg.f_t, "temporal density")?;
    Ok(random_walk_log_pdf(h, cfg.sigma2_t))
}

/// `log p(h^s)` with the video-level mean marginalized out.
pub fn log_pdf_static(h: &LatentSeq, cfg: &PriorConfig) -> Result<f64> {
    check_width(h, cfg, cfg.f_s, "static density")?;
    Ok(static_log_pdf_unchecked(h, cfg.sigma2_s))
}

fn static_log_pdf_unchecked(h: &LatentSeq, sigma2_s: f64) -> f64 {
    let (n, f) = (h.n_frames, h.width);
    if f == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let c = StaticPriorConstant::new(n, sigma2_s);
    let within = sigma2_s / nf;
    let mut quad = 0.0;
    for j in 0..f {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for i in 0..n {
            let v = h.get(i, j);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / nf;
        let mean_sq = sum_sq / nf;
        quad += (mean_sq - mean * mean) / within + mean * mean / (within + 1.0);
    }
    f as f64 * c.log_c - 0.5 * quad
}

/// Posterior values for one video, `[n_frames, width]` views of mean and log-variance.
struct VideoPosterior<'a> {
    mu: &'a [f64],
    log_var: &'a [f64],
}

fn log_q(post: &VideoPosterior<'_>, h: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&m, &lv), &x) in post.mu.iter().zip(post.log_var).zip(h) {
        acc += -0.5 * (LN_2PI + lv + (x - m).powi(2) / lv.exp());
    }
    acc
}

fn log_prior(variant: PriorVariant, h: &LatentSeq, cfg: &PriorConfig) -> f64 {
    match variant {
        PriorVariant::StandardNormal => h.values.iter().map(|x| -0.5 * (LN_2PI + x * x)).sum(),
        PriorVariant::Slow => random_walk_log_pdf(h, cfg.sigma2_t),
        PriorVariant::Factored => {
            let s = h.columns(0, cfg.f_s);
            let t = h.columns(cfg.f_s, cfg.f_t);
            static_log_pdf_unchecked(&s, cfg.sigma2_s) + random_walk_log_pdf(&t, cfg.sigma2_t)
        }
    }
}

/// Monte-Carlo mean and standard error of `stat(h)` for `h ~ q`, where `stat`
/// sees one video's sample at a time and the batch average is taken per draw.
pub fn mc_expectation<F>(post: &PosteriorParams, n_samples: usize, seed: u64, mut stat: F) -> Result<(f64, f64)>
where
    F: FnMut(usize, &LatentSeq) -> f64,
{
    post.validate()?;
    if n_samples < 2 {
        return Err(Error::Invalid("need at least 2 samples".into()));
    }
    let (b, n, f) = (post.batch, post.n_frames, post.width);
    let mut h = LatentSeq::zeros(n, f);
    let sds: Vec<f64> = post.log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
    let (mut mean, mut m2) = (0.0, 0.0);
    for s in 0..n_samples {
        let mut draw = 0.0;
        for v in 0..b {
            let mut r = rng::stream(seed, &[tag::MC_KL, s as u64, v as u64]);
            let off = v * n * f;
            for k in 0..n * f {
                let e: f64 = r.sample(StandardNormal);
                h.values[k] = post.mu[off + k] + sds[off + k] * e;
            }
            draw += stat(v, &h);
        }
        draw /= b as f64;
        let delta = draw - mean;
        mean += delta / (s + 1) as f64;
        m2 += delta * (draw - mean);
    }
    let var = m2 / (n_samples - 1) as f64;
    Ok((mean, (var / n_samples as f64).sqrt()))
}

/// Monte-Carlo estimate of `KL(q || p)` per video, with its standard error.
pub fn mc_kl_estimate(
    post: &PosteriorParams,
    cfg: &PriorConfig,
    variant: PriorVariant,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    if n_samples < 1000 {
        return Err(Error::Invalid(format!("mc_kl_estimate needs >= 1000 samples, got {n_samples}")));
    }
    if post.n_frames != cfg.n_frames {
        return Err(Error::Shape(format!(
            "posterior has {} frames, prior {}",
            post.n_frames, cfg.n_frames
        )));
    }
    if variant == PriorVariant::Factored && post.width != cfg.total_width() {
        return Err(Error::Shape(format!(
            "factored prior needs width {}, posterior has {}",
            cfg.total_width(),
            post.width
        )));
    }
    let per = post.n_frames * post.width;
    mc_expectation(post, n_samples, seed, |v, h| {
        let vp = VideoPosterior {
            mu: &post.mu[v * per..(v + 1) * per],
            log_var: &post.log_var[v * per..(v + 1) * per],
        };
        log_q(&vp, &h.values) - log_prior(variant, h, cfg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, f_s: usize, f_t: usize) -> PriorConfig {
        PriorConfig { n_frames: n, f_s, f_t, ..PriorConfig::default() }
    }

    fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * (2.0 * PI * var).ln() - 0.5 * (x - mean).powi(2) / var
    }

    #[test]
    fn default_config_values() {
        let c = PriorConfig::default();
        assert_eq!(c.sigma2_s, 0.01);
        assert_eq!(c.sigma2_t, 0.01);
        assert_eq!(c.n_frames, 16);
    }

    #[test]
    fn config_validation() {
        assert!(PriorConfig { sigma2_s: 0.0, ..Default::default() }.validate().is_err());
        assert!(PriorConfig { sigma2_t: -1.0, ..Default::default() }.validate().is_err());
        assert!(PriorConfig { n_frames: 0, ..Default::default() }.validate().is_err());
        assert!(cfg(4, 0, 0).validate().is_err());
        assert!(cfg(4, 0, 3).validate().is_ok());
    }

    #[test]
    fn temporal_log_pdf_reference_values() {
        let c = cfg(1, 0, 1);
        let v = log_pdf_temporal(&LatentSeq::zeros(1, 1), &c).unwrap();
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        let c = cfg(2, 0, 1);
        let v = log_pdf_temporal(&LatentSeq::zeros(2, 1), &c).unwrap();
        // -0.5 ln(2 pi) - 0.5 ln(2 pi 0.01)
        assert!((v - 0.464_708_026_584_700_2).abs() < 1e-12, "{v}");
    }

    #[test]
    fn temporal_log_pdf_matches_scalar_oracle() {
        let c = PriorConfig { sigma2_t: 0.37, ..cfg(5, 0, 3) };
        let vals: Vec<f64> = (0..15).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let h = LatentSeq::new(5, 3, vals).unwrap();
        let mut want = 0.0;
        for j in 0..3 {
            want += normal_logpdf(h.get(0, j), 0.0, 1.0);
            for i in 1..5 {
                want += normal_logpdf(h.get(i, j), h.get(i - 1, j), 0.37);
            }
        }
        let got = log_pdf_temporal(&h, &c).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn temporal_depends_only_on_start_and_increments() {
        let c = cfg(4, 0, 1);
        let a = LatentSeq::new(4, 1, vec![0.3, 0.5, 0.2, 0.4]).unwrap();
        // same start, increments +0.2, -0.3, +0.2 -> -0.2, +0.3, -0.2 (same squares)
        let b = LatentSeq::new(4, 1, vec![0.3, 0.1, 0.4, 0.2]).unwrap();
        let va = log_pdf_temporal(&a, &c).unwrap();
        let vb = log_pdf_temporal(&b, &c).unwrap();
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn static_n1_is_marginal_gaussian() {
        let c = cfg(1, 1, 0);
        for &x in &[-3.0, -0.4, 0.0, 0.25, 2.5] {
            let h = LatentSeq::new(1, 1, vec![x]).unwrap();
            let got = log_pdf_static(&h, &c).unwrap();
            let want = normal_logpdf(x, 0.0, 1.0 + c.sigma2_s);
            assert!((got - want).abs() < 1e-10, "{x}: {got} vs {want}");
        }
    }

    #[test]
    fn static_matches_dense_gaussian_oracle() {
        // Direct multivariate normal with covariance sigma2 I + 1 1^T for N = 3.
        let s2 = 0.2;
        let c = PriorConfig { sigma2_s: s2, ..cfg(3, 1, 0) };
        let x = [0.4, -0.1, 0.7];
        // inverse: (1/s2)(I - 11^T/(s2+N)); det: s2^(N-1)(s2+N)
        let n = 3.0;
        let sum: f64 = x.iter().sum();
        let ss: f64 = x.iter().map(|v| v * v).sum();
        let quad = (ss - sum * sum / (s2 + n)) / s2;
        let logdet = (n - 1.0) * s2.ln() + (s2 + n).ln();
        let want = -0.5 * n * (2.0 * PI).ln() - 0.5 * logdet - 0.5 * quad;
        let got = log_pdf_static(&LatentSeq::new(3, 1, x.to_vec()).unwrap(), &c).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn static_is_frame_permutation_invariant() {
        let c = cfg(4, 2, 0);
        let h = LatentSeq::new(4, 2, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6, -0.7, 0.8]).unwrap();
        let p = LatentSeq::new(4, 2, vec![-0.7, 0.8, 0.3, -0.4, 0.1, 0.2, 0.5, 0.6]).unwrap();
        let a = log_pdf_static(&h, &c).unwrap();
        let b = log_pdf_static(&p, &c).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn static_quadrature_normalizes() {
        let c = cfg(2, 1, 0);
        let steps = 1600usize;
        let (lo, hi) = (-8.0, 8.0);
        let dx = (hi - lo) / steps as f64;
        let mut total = 0.0;
        let mut h = LatentSeq::zeros(2, 1);
        for a in 0..steps {
            for b in 0..steps {
                h.values[0] = lo + (a as f64 + 0.5) * dx;
                h.values[1] = lo + (b as f64 + 0.5) * dx;
                total += log_pdf_static(&h, &c).unwrap().exp();
            }
        }
        total *= dx * dx;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn shape_mismatch_errors() {
        let c = cfg(4, 2, 1);
        assert!(log_pdf_static(&LatentSeq::zeros(4, 1), &c).is_err());
        assert!(log_pdf_temporal(&LatentSeq::zeros(3, 1), &c).is_err());
    }

    #[test]
    fn samplers_are_deterministic() {
        let c = cfg(16, 2, 3);
        assert_eq!(sample_static_prior(&c, 42).unwrap(), sample_static_prior(&c, 42).unwrap());
        assert_eq!(sample_temporal_prior(&c, 42).unwrap(), sample_temporal_prior(&c, 42).unwrap());
        assert_ne!(sample_static_prior(&c, 42).unwrap(), sample_static_prior(&c, 43).unwrap());
    }

    #[test]
    fn degenerate_static_variance_gives_equal_frames() {
        let c = PriorConfig { sigma2_s: 1e-12, ..cfg(16, 2, 0) };
        let h = sample_static_prior(&c, 3).unwrap();
        for i in 1..16 {
            for j in 0..2 {
                assert!((h.get(i, j) - h.get(0, j)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn temporal_single_frame_is_standard_normal() {
        let c = cfg(1, 0, 1);
        let m = 20_000;
        let xs: Vec<f64> = (0..m).map(|s| sample_temporal_prior(&c, s).unwrap().values[0]).collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!(mean.abs() < 4.0 / (m as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / m as f64).sqrt());
    }
}
