//! Numerical self-checks: Monte-Carlo and quadrature oracles for the prior and
//! KL terms, finite-difference gradient checks, and exact collapse identities.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::elbo::{self, PosteriorParams, TermGrad, Variant};
use crate::error::Result;
use crate::nn::layers::{BatchNorm, Conv2d, ConvTranspose2d, Layer, Linear, Relu};
use crate::nn::{Act, Mode, NetConfig};
use crate::prior::{log_pdf_static, mc_kl_estimate, LatentSeq, PriorConfig, PriorVariant};
use crate::rng::derive_seed;
use crate::trainer::{TrainConfig, Trainer};

/// One verified property with its measured deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        Check { name: name.into(), deviation, tolerance, passed: deviation <= tolerance }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: deviation {:.3e}, tolerance {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.deviation,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, cs: impl IntoIterator<Item = Check>) {
        self.checks.extend(cs);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{}", c.line());
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(s, "{} checks, {} failed", self.checks.len(), failed);
        s
    }
}

/// Random posterior with means in (-1.5, 1.5) and log-variances in (-4, 0.5).
pub fn random_posterior(batch: usize, n_frames: usize, width: usize, seed: u64) -> PosteriorParams {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let len = batch * n_frames * width;
    let mu = (0..len).map(|_| r.random_range(-1.5..1.5)).collect();
    let log_var = (0..len).map(|_| r.random_range(-4.0..0.5)).collect();
    PosteriorParams { batch, n_frames, width, mu, log_var }
}

/// Analytic KL under test.
pub type KlFn<'a> = dyn Fn(&PosteriorParams, &PriorConfig) -> Result<f64> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub posteriors: usize,
    pub samples: usize,
    /// Allowed distance in standard errors.
    pub z_tolerance: f64,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { posteriors: 50, samples: 200_000, z_tolerance: 4.0, seed: 0 }
    }
}

/// Worst `|analytic - MC| / stderr` over random single-video posteriors.
pub fn mc_kl_check(name: &str, kl: &KlFn<'_>, variant: PriorVariant, cfg: &PriorConfig, opts: &McOptions) -> Result<Check> {
    let width = cfg.total_width();
    let z: Vec<f64> = (0..opts.posteriors)
        .into_par_iter()
        .map(|k| {
            let post = random_posterior(1, cfg.n_frames, width, derive_seed(opts.seed, &[k as u64]));
            let analytic = kl(&post, cfg)?;
            let (mean, stderr) = mc_kl_estimate(&post, cfg, variant, opts.samples, derive_seed(opts.seed, &[k as u64, 1]))?;
            Ok((analytic - mean).abs() / stderr)
        })
        .collect::<Result<_>>()?;
    Ok(Check::new(name, z.into_iter().fold(0.0, f64::max), opts.z_tolerance))
}

/// The three KL variants against their Monte-Carlo estimates.
pub fn mc_kl_checks(cfg: &PriorConfig, opts: &McOptions) -> Result<Vec<Check>> {
    Ok(vec![
        mc_kl_check("kl_factored vs Monte-Carlo (z-score)", &elbo::kl_factored, PriorVariant::Factored, cfg, opts)?,
        mc_kl_check("kl_slow vs Monte-Carlo (z-score)", &elbo::kl_slow, PriorVariant::Slow, cfg, opts)?,
        mc_kl_check(
            "kl_standard_normal vs Monte-Carlo (z-score)",
            &|p: &PosteriorParams, _: &PriorConfig| Ok(elbo::kl_standard_normal(p)),
            PriorVariant::StandardNormal,
            cfg,
            opts,
        )?,
    ])
}

/// Integral of the two-frame, one-feature static density over `[-8, 8]^2`
/// by the midpoint rule with `steps` cells per axis.
pub fn static_quadrature(sigma2_s: f64, steps: usize) -> Result<f64> {
    let cfg = PriorConfig { sigma2_s, f_s: 1, f_t: 0, n_frames: 2, ..PriorConfig::default() };
    let (lo, hi) = (-8.0, 8.0);
    let dx = (hi - lo) / steps as f64;
    let rows: Vec<f64> = (0..steps)
        .into_par_iter()
        .map(|i| {
            let a = lo + (i as f64 + 0.5) * dx;
            let mut h = LatentSeq::zeros(2, 1);
            let mut acc = 0.0;
            for j in 0..steps {
                h.values[0] = a;
                h.values[1] = lo + (j as f64 + 0.5) * dx;
                acc += log_pdf_static(&h, &cfg)?.exp();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum::<f64>() * dx * dx)
}

/// Worst pointwise gap between the one-frame static density and `Normal(0, 1 + sigma2_s)`.
pub fn static_single_frame_gap(sigma2_s: f64) -> Result<f64> {
    let cfg = PriorConfig { sigma2_s, f_s: 1, f_t: 0, n_frames: 1, ..PriorConfig::default() };
    let var = 1.0 + sigma2_s;
    let mut worst: f64 = 0.0;
    for k in 0..=200 {
        let x = -6.0 + 0.06 * k as f64;
        let p = log_pdf_static(&LatentSeq::new(1, 1, vec![x])?, &cfg)?.exp();
        let oracle = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        worst = worst.max((p - oracle).abs());
    }
    Ok(worst)
}

fn rel_err(num: f64, ana: f64, floor: f64) -> f64 {
    let e = (num - ana).abs() / num.abs().max(ana.abs()).max(floor);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// Fourth-order central difference of `f` at `x[k]`.
fn five_point<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], k: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    let mut at = |d: f64| {
        y[k] = x[k] + d;
        f(&y)
    };
    (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
}

/// Worst relative error of a term's analytic gradient against finite differences.
pub fn term_gradient_error<F>(post: &PosteriorParams, term: F) -> Result<f64>
where
    F: Fn(&PosteriorParams) -> Result<TermGrad>,
{
    let g = term(post)?;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut p = post.clone();
    let mut by_mu = |mu: &[f64]| {
        p.mu.copy_from_slice(mu);
        term(&p).map(|t| t.value).unwrap_or(f64::NAN)
    };
    for k in 0..post.mu.len() {
        worst = worst.max(rel_err(five_point(&mut by_mu, &post.mu, k, h), g.d_mu[k], 1e-4));
    }
    let mut p = post.clone();
    let mut by_lv = |lv: &[f64]| {
        p.log_var.copy_from_slice(lv);
        term(&p).map(|t| t.value).unwrap_or(f64::NAN)
    };
    for k in 0..post.log_var.len() {
        worst = worst.max(rel_err(five_point(&mut by_lv, &post.log_var, k, h), g.d_log_var[k], 1e-4));
    }
    Ok(worst)
}

/// Gradient checks for every KL building block and the Bernoulli likelihood.
pub fn loss_gradient_checks(tolerance: f64, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (case, (sigma2_s, sigma2_t)) in [(0.01, 0.01), (0.3, 0.7)].into_iter().enumerate() {
        let cfg = PriorConfig { sigma2_s, sigma2_t, f_s: 2, f_t: 3, n_frames: 4 };
        let post = random_posterior(2, 4, 5, derive_seed(seed, &[case as u64]));
        let (s, t) = post.split(&cfg)?;
        let mut worst = vec![
            ("entropy_term", term_gradient_error(&post, |p| Ok(elbo::entropy_term_grad(p)))?),
            ("static_cross_entropy", term_gradient_error(&s, |p| elbo::static_cross_entropy_grad(p, &cfg))?),
            ("temporal_cross_entropy", term_gradient_error(&t, |p| elbo::temporal_cross_entropy_grad(p, &cfg))?),
            ("kl_factored", term_gradient_error(&post, |p| elbo::kl_factored_grad(p, &cfg))?),
            ("kl_slow", term_gradient_error(&post, |p| elbo::kl_slow_grad(p, &cfg))?),
            ("kl_standard_normal", term_gradient_error(&post, |p| Ok(elbo::kl_standard_normal_grad(p)))?),
        ];
        if case == 0 {
            worst.push(("bernoulli_recon", recon_gradient_error(derive_seed(seed, &[9]))?));
        }
        for (name, w) in worst {
            out.push(Check::new(format!("gradient {name} (case {case})"), w, tolerance));
        }
    }
    Ok(out)
}

fn recon_gradient_error(seed: u64) -> Result<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let batch = 3;
    let probs: Vec<f64> = (0..60).map(|_| r.random_range(0.05..0.95)).collect();
    let frames: Vec<f32> = (0..60).map(|_| r.random_range(0.0..1.0)).collect();
    let g = elbo::bernoulli_recon_grad(&probs, &frames, batch);
    let mut f = |p: &[f64]| elbo::bernoulli_recon_loglik(p, &frames, batch).unwrap_or(f64::NAN);
    let mut worst: f64 = 0.0;
    for k in 0..probs.len() {
        worst = worst.max(rel_err(five_point(&mut f, &probs, k, 1e-5), g[k], 1e-4));
    }
    Ok(worst)
}

pub fn random_act(c: usize, n: usize, h: usize, w: usize, seed: u64) -> Act<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..c * n * h * w).map(|_| r.random_range(-1.0..1.0)).collect();
    Act::from_vec(c, n, h, w, data)
}

/// Scalar objective `sum(coef * layer(x))` and its full finite-difference
/// check over inputs and parameters. Returns the worst relative error.
pub fn layer_gradient_error(layer: &mut dyn Layer<f64>, x: &Act<f64>, mode: Mode) -> f64 {
    let y = layer.forward(x, mode).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let coef: Vec<f64> = (0..y.data.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let objective = |layer: &mut dyn Layer<f64>, x: &Act<f64>| -> f64 {
        let y = layer.forward(x, mode).unwrap();
        y.data.iter().zip(&coef).map(|(a, b)| a * b).sum()
    };
    for p in layer.params_mut() {
        p.grad.iter_mut().for_each(|g| *g = 0.0);
    }
    let dy = Act::from_vec(y.c, y.n, y.h, y.w, coef.clone());
    let dx = layer.backward(&dy);
    let saved_buffers: Vec<Vec<f64>> = layer.buffers().iter().map(|b| b.value.clone()).collect();
    let restore = |layer: &mut dyn Layer<f64>| {
        for (b, v) in layer.buffers_mut().into_iter().zip(&saved_buffers) {
            b.value.clone_from(v);
        }
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[k] += h;
        let fp = objective(layer, &xp);
        let mut xm = x.clone();
        xm.data[k] -= h;
        let fm = objective(layer, &xm);
        restore(layer);
        worst = worst.max(rel_err((fp - fm) / (2.0 * h), dx.data[k], 1e-4));
    }
    let n_params = layer.params().len();
    for pi in 0..n_params {
        let len = layer.params()[pi].value.len();
        for k in 0..len {
            let ana = layer.params()[pi].grad[k];
            layer.params_mut()[pi].value[k] += h;
            let fp = objective(layer, x);
            layer.params_mut()[pi].value[k] -= 2.0 * h;
            let fm = objective(layer, x);
            layer.params_mut()[pi].value[k] += h;
            restore(layer);
            worst = worst.max(rel_err((fp - fm) / (2.0 * h), ana, 1e-4));
        }
    }
    worst
}

/// Every layer type, both conv strides, batch norm in both modes.
pub fn layer_gradient_checks(tolerance: f64, seed: u64) -> Vec<Check> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = random_act(2, 3, 6, 6, derive_seed(seed, &[1]));
    let xt = random_act(2, 3, 3, 3, derive_seed(seed, &[2]));
    let xl = random_act(5, 4, 1, 1, derive_seed(seed, &[3]));
    let batch_norm = || {
        let mut bn = BatchNorm::new(2);
        bn.scale.value = vec![1.3, 0.7];
        bn.shift.value = vec![0.1, -0.4];
        bn
    };
    let mut bn = batch_norm();
    let mut bn_infer = batch_norm();
    // running statistics away from their defaults
    bn_infer.forward(&random_act(2, 5, 3, 3, derive_seed(seed, &[4])), Mode::Train).unwrap();
    let cases: Vec<(&str, f64)> = vec![
        ("conv stride 1", layer_gradient_error(&mut Conv2d::new(2, 3, 1, &mut r), &x, Mode::Train)),
        ("conv stride 2", layer_gradient_error(&mut Conv2d::new(2, 3, 2, &mut r), &x, Mode::Train)),
        ("conv-transpose stride 1", layer_gradient_error(&mut ConvTranspose2d::new(2, 3, 1, &mut r), &xt, Mode::Train)),
        ("conv-transpose stride 2", layer_gradient_error(&mut ConvTranspose2d::new(2, 3, 2, &mut r), &xt, Mode::Train)),
        ("linear", layer_gradient_error(&mut Linear::new(5, 3, &mut r), &xl, Mode::Train)),
        ("batch-norm train", layer_gradient_error(&mut bn, &x, Mode::Train)),
        ("batch-norm infer", layer_gradient_error(&mut bn_infer, &x, Mode::Infer)),
        ("relu", layer_gradient_error(&mut Relu::new(), &x, Mode::Train)),
    ];
    cases.into_iter().map(|(name, w)| Check::new(format!("gradient layer {name}"), w, tolerance)).collect()
}

/// Relative tolerance of the whole-model check: the objective sums thousands
/// of pixel terms, so its difference quotients carry roundoff near 1e-5.
pub const MODEL_GRADIENT_TOLERANCE: f64 = 1e-4;

/// Outcome of [`model_gradient_error`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelGradient {
    pub worst: f64,
    pub entries: usize,
    /// Parameter tensors with no kink-free candidate entry.
    pub skipped_tensors: usize,
    pub tensors: usize,
}

/// Finite-difference check of the full negative-ELBO gradient through a tiny
/// network, on up to four entries of every parameter tensor. Errors are
/// relative to `max(|g|, 1)`. An entry whose difference quotient changes
/// between two step sizes has a ReLU kink inside the stencil and is replaced
/// by the next candidate index.
pub fn model_gradient_error(variant: Variant, seed: u64) -> Result<ModelGradient> {
    let mut cfg = TrainConfig { variant, beta: 2.0, seed, ..TrainConfig::default() };
    cfg.prior = PriorConfig { n_frames: 2, ..PriorConfig::default() };
    cfg.batch_videos = 2;
    let net = NetConfig { stage_channels: [2, 2, 2, 2], hidden: 4, latent: cfg.prior.total_width() };
    let mut t: Trainer<f64> = Trainer::with_net(cfg, net)?;
    let (b, n) = (2, 2);
    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let frames: Vec<f32> = (0..b * n * 64 * 64).map(|_| if r.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
    let noise = derive_seed(seed, &[2]);
    t.model.zero_grad();
    t.forward_backward(&frames, b, n, noise)?;
    let grads: Vec<Vec<f64>> = t.model.named_params().iter().map(|(_, p)| p.grad.clone()).collect();
    let (h_coarse, h_fine) = (1e-5, 3e-6);
    let mut out = ModelGradient { worst: 0.0, entries: 0, skipped_tensors: 0, tensors: grads.len() };
    for (pi, g) in grads.iter().enumerate() {
        let len = g.len();
        let mut checked = 0;
        for c in 0..len.min(16) {
            if checked == 4 {
                break;
            }
            let k = (c * 7919 + pi) % len;
            let mut f = |d: f64| -> Result<f64> {
                t.model.named_params_mut()[pi].1.value[k] += d;
                let row = t.forward_backward(&frames, b, n, noise)?;
                t.model.named_params_mut()[pi].1.value[k] -= d;
                Ok(-row.elbo)
            };
            let f0 = f(0.0)?;
            // (right - left) one-sided quotient gap: f''·h when smooth
            let mut sides = |h: f64| -> Result<(f64, f64)> {
                let (fp, fm) = (f(h)?, f(-h)?);
                Ok(((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / h))
            };
            let (coarse, gap_coarse) = sides(h_coarse)?;
            let (fine, gap_fine) = sides(h_fine)?;
            let scale = g[k].abs().max(1.0);
            let kinked = rel_err(coarse, fine, 1.0) > MODEL_GRADIENT_TOLERANCE
                || (gap_fine - gap_coarse * h_fine / h_coarse).abs() > MODEL_GRADIENT_TOLERANCE * scale;
            if kinked {
                continue;
            }
            out.worst = out.worst.max(rel_err(fine, g[k], 1.0));
            checked += 1;
        }
        out.entries += checked;
        if checked == 0 {
            out.skipped_tensors += 1;
        }
    }
    if out.skipped_tensors * 2 > out.tensors {
        out.worst = f64::INFINITY;
    }
    Ok(out)
}

/// Whole-model checks for the three variants.
pub fn model_gradient_checks(seed: u64) -> Result<Vec<Check>> {
    [Variant::Factored, Variant::Slow, Variant::Vae]
        .into_iter()
        .map(|v| {
            let m = model_gradient_error(v, seed)?;
            Ok(Check::new(
                format!(
                    "gradient whole model ({v}, {} entries, {}/{} tensors kinked)",
                    m.entries, m.skipped_tensors, m.tensors
                ),
                m.worst,
                MODEL_GRADIENT_TOLERANCE,
            ))
        })
        .collect()
}

/// Identities that must hold to rounding error: kl_slow is kl_factored with an
/// empty static factor, a one-frame walk is the standard-normal KL, entropy
/// splits additively, and the unit-Gaussian entropy value.
pub fn collapse_checks(tolerance: f64, seed: u64) -> Result<Vec<Check>> {
    let cfg = PriorConfig::default();
    let width = cfg.total_width();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let (mut slow_gap, mut n1_gap, mut add_gap) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..20u64 {
        let post = random_posterior(3, cfg.n_frames, width, derive_seed(seed, &[k]));
        slow_gap = slow_gap.max(rel(elbo::kl_slow(&post, &cfg)?, elbo::kl_factored(&post, &cfg.with_widths(0, width))?));
        let one = PriorConfig { n_frames: 1, ..cfg };
        let post1 = random_posterior(3, 1, width, derive_seed(seed, &[k, 1]));
        n1_gap = n1_gap.max(rel(elbo::kl_slow(&post1, &one)?, elbo::kl_standard_normal(&post1)));
        let (s, t) = post.split(&cfg)?;
        add_gap = add_gap.max(rel(elbo::entropy_term(&post), elbo::entropy_term(&s) + elbo::entropy_term(&t)));
    }
    let unit = PosteriorParams::new(1, 1, 1, vec![0.0], vec![0.0])?;
    let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5;
    Ok(vec![
        Check::new("kl_slow = kl_factored with f_s = 0", slow_gap, tolerance),
        Check::new("one-frame kl_slow = kl_standard_normal", n1_gap, tolerance),
        Check::new("entropy additive across factor split", add_gap, tolerance),
        Check::new("unit Gaussian entropy term", (elbo::entropy_term(&unit) - expected).abs(), tolerance),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub mc: McOptions,
    pub quadrature_steps: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { mc: McOptions::default(), quadrature_steps: 2000, gradient_tolerance: 1e-5, seed: 0 }
    }
}

pub fn run_verify(opts: &VerifyOptions) -> Result<Report> {
    let mut report = Report::default();
    report.extend(mc_kl_checks(&PriorConfig::default(), &opts.mc)?);
    report.push(Check::new(
        "static density integrates to 1 (N=2)",
        (static_quadrature(0.01, opts.quadrature_steps)? - 1.0).abs(),
        1e-3,
    ));
    report.push(Check::new("one-frame static density = Normal(0, 1 + sigma2_s)", static_single_frame_gap(0.01)?, 1e-10));
    report.extend(loss_gradient_checks(opts.gradient_tolerance, opts.seed)?);
    report.extend(layer_gradient_checks(opts.gradient_tolerance, opts.seed));
    report.extend(model_gradient_checks(opts.seed)?);
    report.extend(collapse_checks(1e-12, opts.seed)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_error_in_static_term_is_caught() {
        let cfg = PriorConfig::default();
        let opts = McOptions { posteriors: 3, samples: 2000, ..McOptions::default() };
        let broken = |p: &PosteriorParams, c: &PriorConfig| -> Result<f64> {
            let (s, t) = p.split(c)?;
            Ok(elbo::entropy_term(p) + elbo::static_cross_entropy(&s, c)? - elbo::temporal_cross_entropy(&t, c)?)
        };
        assert!(!mc_kl_check("broken", &broken, PriorVariant::Factored, &cfg, &opts).unwrap().passed);
        assert!(mc_kl_check("ok", &elbo::kl_factored, PriorVariant::Factored, &cfg, &opts).unwrap().passed);
    }

    #[test]
    fn report_lines() {
        let mut r = Report::default();
        r.push(Check::new("a", 0.5, 1.0));
        r.push(Check::new("b", 2.0, 1.0));
        let text = r.render();
        assert!(text.contains("PASS a: deviation 5.000e-1, tolerance 1.000e0"));
        assert!(text.starts_with("PASS a"));
        assert!(text.contains("FAIL b"));
        assert!(!r.passed());
    }

    #[test]
    fn cheap_checks_pass() {
        for c in collapse_checks(1e-12, 3).unwrap() {
            assert!(c.passed, "{}", c.line());
        }
        for c in loss_gradient_checks(1e-5, 3).unwrap() {
            assert!(c.passed, "{}", c.line());
        }
        assert!(static_single_frame_gap(0.01).unwrap() <= 1e-10);
    }

    #[test]
    fn quadrature_normalizes() {
        assert!((static_quadrature(0.01, 800).unwrap() - 1.0).abs() < 1e-3);
    }
}
