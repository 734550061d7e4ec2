//! Subcommand implementations behind the `fsvae` binary: data generation,
//! training, verification, evaluation, and the factor swap / interpolation /
//! latent plot tools. Every command writes `manifest.txt` into its output
//! directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::{write_shards, VideoBatch};
use crate::elbo::PosteriorParams;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, results_csv, EvalConfig, ModelEval, ResultRow};
use crate::kv::{self, KvMap};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{reparam_sample, Mode, Model, FRAME};
use crate::prior::{LatentSeq, PriorConfig};
use crate::rng::{derive_seed, tag};
use crate::trainer::{load_model, TrainConfig, Trainer, LOG_HEADER};
use crate::verify::{run_verify, Report, VerifyOptions};

pub const MANIFEST: &str = "manifest.txt";
/// Gap between tiles in a PGM grid.
pub const GRID_GAP: usize = 2;
const GAP_VALUE: u8 = 128;

/// `a' = [static(b) | temporal(a)]`, `b' = [static(a) | temporal(b)]`.
pub fn swap_factors(a: &LatentSeq, b: &LatentSeq, cfg: &PriorConfig) -> Result<(LatentSeq, LatentSeq)> {
    let w = cfg.total_width();
    if a.width != w || b.width != w || a.n_frames != b.n_frames {
        return Err(Error::Shape(format!(
            "swap needs two [N, {w}] sequences, got [{}, {}] and [{}, {}]",
            a.n_frames, a.width, b.n_frames, b.width
        )));
    }
    let (sa, ta) = (a.columns(0, cfg.f_s), a.columns(cfg.f_s, cfg.f_t));
    let (sb, tb) = (b.columns(0, cfg.f_s), b.columns(cfg.f_s, cfg.f_t));
    Ok((sb.concat(&ta)?, sa.concat(&tb)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Static,
    Temporal,
}

impl Factor {
    pub fn name(self) -> &'static str {
        match self {
            Factor::Static => "static",
            Factor::Temporal => "temporal",
        }
    }

    fn columns(self, cfg: &PriorConfig) -> std::ops::Range<usize> {
        match self {
            Factor::Static => 0..cfg.f_s,
            Factor::Temporal => cfg.f_s..cfg.total_width(),
        }
    }
}

impl std::str::FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Factor::Static),
            "temporal" => Ok(Factor::Temporal),
            other => Err(Error::Invalid(format!("unknown factor {other:?} (static|temporal)"))),
        }
    }
}

/// Linear path of the chosen factor from `from` to `to`, endpoints included;
/// the other factor stays at `from`.
pub fn interpolate_latents(
    from: &LatentSeq,
    to: &LatentSeq,
    steps: usize,
    factor: Factor,
    cfg: &PriorConfig,
) -> Result<Vec<LatentSeq>> {
    if steps < 2 {
        return Err(Error::Invalid(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    if from.n_frames != to.n_frames || from.width != to.width || from.width != cfg.total_width() {
        return Err(Error::Shape("interpolation endpoints differ in shape".into()));
    }
    let cols = factor.columns(cfg);
    Ok((0..steps)
        .map(|s| {
            let t = s as f64 / (steps - 1) as f64;
            let mut h = from.clone();
            for i in 0..from.n_frames {
                for j in cols.clone() {
                    let k = i * from.width + j;
                    h.values[k] = if s == steps - 1 { to.values[k] } else { from.values[k] + t * (to.values[k] - from.values[k]) };
                }
            }
            h
        })
        .collect())
}

/// Binary PGM of square `size`-pixel frames tiled row-major with
/// [`GRID_GAP`]-pixel separators between tiles and no outer border.
pub fn pgm_grid(frames: &[&[f32]], size: usize, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols < frames.len() || rows == 0 || cols == 0 {
        return Err(Error::Invalid(format!("{rows}x{cols} grid cannot hold {} frames", frames.len())));
    }
    if let Some(f) = frames.iter().find(|f| f.len() != size * size) {
        return Err(Error::Shape(format!("frame has {} pixels, expected {}", f.len(), size * size)));
    }
    let w = cols * size + (cols - 1) * GRID_GAP;
    let h = rows * size + (rows - 1) * GRID_GAP;
    let mut pixels = vec![GAP_VALUE; w * h];
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            for y in 0..size {
                let row = (r * (size + GRID_GAP) + y) * w + c * (size + GRID_GAP);
                for x in 0..size {
                    pixels[row + x] = frames.get(k).map_or(0, |f| (f[y * size + x].clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

pub fn emit_pgm_grid(frames: &[&[f32]], rows: usize, cols: usize, path: &Path) -> Result<()> {
    fs::write(path, pgm_grid(frames, FRAME, rows, cols)?)?;
    Ok(())
}

/// SHA-256 of a file as lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Write `manifest.txt`: command, seed, resolved config and artifact hashes.
pub fn write_manifest(out: &Path, command: &str, seed: u64, config: &KvMap, artifacts: &[PathBuf]) -> Result<PathBuf> {
    let mut m = KvMap::new();
    m.insert("command".into(), command.into());
    m.insert("seed".into(), seed.to_string());
    for (k, v) in config {
        m.insert(format!("config.{k}"), v.clone());
    }
    for a in artifacts {
        let name = a.strip_prefix(out).unwrap_or(a).to_string_lossy().replace(char::is_whitespace, "_");
        m.insert(format!("artifact.{name}"), sha256_file(a)?);
    }
    let path = out.join(MANIFEST);
    fs::write(&path, kv::render(&m))?;
    Ok(path)
}

/// Training config from defaults, an optional key=value file, then overrides.
pub fn resolve_config(file: Option<&Path>, overrides: &KvMap) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = file {
        cfg = TrainConfig::from_kv_over(&cfg, &kv::parse(&fs::read_to_string(p)?)?)?;
    }
    cfg = TrainConfig::from_kv_over(&cfg, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn take_videos(b: &VideoBatch, start: usize, count: usize) -> VideoBatch {
    let n = b.n_frames;
    let px = VideoBatch::PIXELS;
    VideoBatch {
        batch: count,
        n_frames: n,
        frames: b.frames[start * n * px..(start + count) * n * px].to_vec(),
        labels: b.labels[start..start + count].to_vec(),
        positions: b.positions[start * n..(start + count) * n].to_vec(),
        angles: if b.angles.is_empty() { Vec::new() } else { b.angles[start * n..(start + count) * n].to_vec() },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSplit {
    Train,
    Eval,
}

impl std::str::FromStr for DataSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(DataSplit::Train),
            "eval" => Ok(DataSplit::Eval),
            other => Err(Error::Invalid(format!("unknown split {other:?} (train|eval)"))),
        }
    }
}

/// Write `videos` videos as shards of at most `per_shard` videos each.
pub fn gen_data(cfg: &TrainConfig, split: DataSplit, videos: usize, per_shard: usize, out: &Path) -> Result<Vec<PathBuf>> {
    if videos == 0 || per_shard == 0 {
        return Err(Error::Invalid("videos and per-shard must be positive".into()));
    }
    fs::create_dir_all(out)?;
    let n = cfg.prior.n_frames;
    let batches: Vec<VideoBatch> = match split {
        DataSplit::Train => {
            let src = cfg.data.train_source(n, cfg.seed)?;
            (0..videos.div_ceil(per_shard))
                .map(|k| src.batch(k as u64, per_shard.min(videos - k * per_shard)))
                .collect::<Result<_>>()?
        }
        DataSplit::Eval => {
            let all = cfg.data.eval_set(n, videos, cfg.seed)?;
            (0..videos).step_by(per_shard).map(|s| take_videos(&all, s, per_shard.min(videos - s))).collect()
        }
    };
    let mut paths = write_shards(&batches, out)?;
    let mut meta = cfg.to_kv();
    meta.insert("gen.split".into(), format!("{split:?}").to_lowercase());
    meta.insert("gen.videos".into(), videos.to_string());
    meta.insert("gen.per_shard".into(), per_shard.to_string());
    paths.push(write_manifest(out, "gen-data", cfg.seed, &meta, &paths)?);
    Ok(paths)
}

pub const TRAIN_LOG: &str = "log.csv";

/// Train to `cfg.iterations`, writing the metric log, checkpoints and manifest.
pub fn train(cfg: &TrainConfig, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let log_path = out.join(TRAIN_LOG);
    let mut log = BufWriter::new(fs::File::create(&log_path)?);
    writeln!(log, "{LOG_HEADER}")?;
    let mut t: Trainer<f32> = Trainer::new(cfg.clone())?;
    t.run(&mut log, Some(out))?;
    drop(log);
    let mut paths = vec![log_path];
    let mut ckpts: Vec<PathBuf> = fs::read_dir(out)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "fsvae"))
        .collect();
    ckpts.sort();
    paths.extend(ckpts);
    paths.push(write_manifest(out, "train", cfg.seed, &cfg.to_kv(), &paths)?);
    Ok(paths)
}

/// Run the numerical self-checks; the report is also written to `out` when given.
pub fn verify(opts: &VerifyOptions, out: Option<&Path>) -> Result<Report> {
    let report = run_verify(opts)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let path = dir.join("verify.txt");
        fs::write(&path, report.render())?;
        let mut meta = KvMap::new();
        meta.insert("mc.posteriors".into(), opts.mc.posteriors.to_string());
        meta.insert("mc.samples".into(), opts.mc.samples.to_string());
        write_manifest(dir, "verify", opts.seed, &meta, &[path])?;
    }
    Ok(report)
}

fn load(checkpoint: &Path) -> Result<(TrainConfig, Model<f32>)> {
    load_model(&Checkpoint::load(checkpoint)?)
}

fn eval_meta(cfg: &TrainConfig, checkpoint: &Path, ec: &EvalConfig) -> Result<KvMap> {
    let mut meta = cfg.to_kv();
    meta.insert("eval.checkpoint_sha256".into(), sha256_file(checkpoint)?);
    meta.insert("eval.videos".into(), ec.videos.to_string());
    Ok(meta)
}

/// Which metrics an evaluation writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    DScore,
    Transfer,
}

pub fn eval_rows(cfg: &TrainConfig, e: &ModelEval, kind: EvalKind) -> Vec<ResultRow> {
    let row = |metric: &str, value: f64| ResultRow {
        model: cfg.variant.name().to_string(),
        beta: cfg.beta,
        seed: cfg.seed,
        metric: metric.to_string(),
        value,
    };
    match kind {
        EvalKind::DScore => {
            let a = e.dscore.accuracies;
            vec![
                row("dscore", e.dscore.score),
                row("acc_static_features_static_target", a[0]),
                row("acc_static_features_temporal_target", a[1]),
                row("acc_temporal_features_temporal_target", a[2]),
                row("acc_temporal_features_static_target", a[3]),
                row("splits_skipped", e.dscore.skipped as f64),
            ]
        }
        EvalKind::Transfer => vec![row("transfer", e.transfer), row("transfer_majority_baseline", e.transfer_baseline)],
    }
}

/// Evaluate a checkpoint on a fresh held-out set and write `results.csv`.
pub fn evaluate(checkpoint: &Path, ec: &EvalConfig, kind: EvalKind, out: &Path) -> Result<(ModelEval, Vec<PathBuf>)> {
    fs::create_dir_all(out)?;
    let (cfg, mut model) = load(checkpoint)?;
    let e = evaluate_model(&mut model, &cfg, ec)?;
    let path = out.join("results.csv");
    fs::write(&path, results_csv(&eval_rows(&cfg, &e, kind)))?;
    let command = match kind {
        EvalKind::DScore => "eval-dscore",
        EvalKind::Transfer => "eval-transfer",
    };
    let manifest = write_manifest(out, command, ec.seed, &eval_meta(&cfg, checkpoint, ec)?, std::slice::from_ref(&path))?;
    Ok((e, vec![path, manifest]))
}

/// Sampled latent sequence of every video in `set`.
fn sample_latents(model: &mut Model<f32>, set: &VideoBatch, seed: u64) -> Result<Vec<LatentSeq>> {
    let post: PosteriorParams = model.encode(&set.frames, set.batch, set.n_frames, Mode::Infer)?;
    let h = reparam_sample(&post, seed).h;
    let per = set.n_frames * post.width;
    (0..set.batch).map(|v| LatentSeq::new(set.n_frames, post.width, h[v * per..(v + 1) * per].to_vec())).collect()
}

fn decode_seqs(model: &mut Model<f32>, seqs: &[LatentSeq]) -> Result<Vec<Vec<f32>>> {
    let n = seqs[0].n_frames;
    let h: Vec<f64> = seqs.iter().flat_map(|s| s.values.iter().copied()).collect();
    let probs = model.decode(&h, seqs.len(), n, Mode::Infer)?;
    Ok(probs.chunks(FRAME * FRAME).map(|c| c.to_vec()).collect())
}

/// Swap the factors of two held-out videos and render `[a | a']` over `[b | b']`.
pub fn swap(checkpoint: &Path, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let (cfg, mut model) = load(checkpoint)?;
    let set = cfg.data.eval_set(cfg.prior.n_frames, 2, seed)?;
    let h = sample_latents(&mut model, &set, derive_seed(seed, &[tag::PLOT]))?;
    let (a2, b2) = swap_factors(&h[0], &h[1], &cfg.prior)?;
    let frames = decode_seqs(&mut model, &[h[0].clone(), a2, h[1].clone(), b2])?;
    let n = cfg.prior.n_frames;
    let order: Vec<&[f32]> = [(0, 1), (2, 3)]
        .iter()
        .flat_map(|&(x, y)| frames[x * n..(x + 1) * n].iter().chain(&frames[y * n..(y + 1) * n]).map(|f| f.as_slice()))
        .collect();
    let path = out.join("swap.pgm");
    emit_pgm_grid(&order, 2, 2 * n, &path)?;
    let ec = EvalConfig { seed, ..EvalConfig::default() };
    let manifest = write_manifest(out, "swap", seed, &eval_meta(&cfg, checkpoint, &ec)?, std::slice::from_ref(&path))?;
    Ok(vec![path, manifest])
}

/// Interpolate one factor between two held-out videos; one grid row per step.
pub fn interpolate(checkpoint: &Path, seed: u64, steps: usize, factor: Factor, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let (cfg, mut model) = load(checkpoint)?;
    let set = cfg.data.eval_set(cfg.prior.n_frames, 2, seed)?;
    let h = sample_latents(&mut model, &set, derive_seed(seed, &[tag::PLOT]))?;
    let path_seqs = interpolate_latents(&h[0], &h[1], steps, factor, &cfg.prior)?;
    let frames = decode_seqs(&mut model, &path_seqs)?;
    let refs: Vec<&[f32]> = frames.iter().map(|f| f.as_slice()).collect();
    let path = out.join(format!("interpolate_{}.pgm", factor.name()));
    emit_pgm_grid(&refs, steps, cfg.prior.n_frames, &path)?;
    let mut meta = eval_meta(&cfg, checkpoint, &EvalConfig { seed, ..EvalConfig::default() })?;
    meta.insert("interpolate.steps".into(), steps.to_string());
    meta.insert("interpolate.factor".into(), factor.name().into());
    let manifest = write_manifest(out, "interpolate", seed, &meta, std::slice::from_ref(&path))?;
    Ok(vec![path, manifest])
}

/// One sampled latent per frame and factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint {
    pub video: usize,
    pub frame: usize,
    pub factor: Factor,
    pub values: Vec<f64>,
}

pub fn latent_points(seqs: &[LatentSeq], cfg: &PriorConfig) -> Vec<LatentPoint> {
    let mut out = Vec::new();
    for (v, s) in seqs.iter().enumerate() {
        for i in 0..s.n_frames {
            for factor in [Factor::Static, Factor::Temporal] {
                out.push(LatentPoint { video: v, frame: i, factor, values: s.frame(i)[factor.columns(cfg)].to_vec() });
            }
        }
    }
    out
}

pub fn latent_csv(points: &[LatentPoint]) -> String {
    let mut s = String::from("video_id,frame_idx,factor,values\n");
    for p in points {
        let vals: Vec<String> = p.values.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("{},{},{},{}\n", p.video, p.frame, p.factor.name(), vals.join(" ")));
    }
    s
}

/// Mean within-video variance over the variance of per-video means, summed
/// over features, for one factor.
pub fn within_between_ratio(points: &[LatentPoint], factor: Factor) -> Option<f64> {
    let pts: Vec<&LatentPoint> = points.iter().filter(|p| p.factor == factor).collect();
    let dim = pts.first()?.values.len();
    let videos = pts.iter().map(|p| p.video).max()? + 1;
    if videos < 2 || dim == 0 {
        return None;
    }
    let mut sums = vec![vec![0.0; dim]; videos];
    let mut counts = vec![0usize; videos];
    for p in &pts {
        counts[p.video] += 1;
        for (s, v) in sums[p.video].iter_mut().zip(&p.values) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> = sums.iter().zip(&counts).map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect()).collect();
    let within: f64 = pts
        .iter()
        .map(|p| p.values.iter().zip(&means[p.video]).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / pts.len() as f64;
    let grand: Vec<f64> = (0..dim).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / videos as f64).collect();
    let between: f64 =
        means.iter().map(|m| m.iter().zip(&grand).map(|(a, g)| (a - g).powi(2)).sum::<f64>()).sum::<f64>() / videos as f64;
    if between == 0.0 {
        return None;
    }
    Some(within / between)
}

/// Scatter plot of a 2-D factor: each video's frames joined in order by a
/// polyline, one gray level per video.
pub fn scatter_pgm(points: &[LatentPoint], factor: Factor, size: usize) -> Option<Vec<u8>> {
    let pts: Vec<&LatentPoint> = points.iter().filter(|p| p.factor == factor).collect();
    if pts.is_empty() || pts.iter().any(|p| p.values.len() != 2) || size < 8 {
        return None;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for d in 0..2 {
            lo[d] = lo[d].min(p.values[d]);
            hi[d] = hi[d].max(p.values[d]);
        }
    }
    let margin = 4.0;
    let span = (size as f64 - 1.0 - 2.0 * margin).max(1.0);
    let to_px = |v: &[f64]| -> (f64, f64) {
        let x = margin + (v[0] - lo[0]) / (hi[0] - lo[0]).max(1e-12) * span;
        let y = margin + (hi[1] - v[1]) / (hi[1] - lo[1]).max(1e-12) * span;
        (x, y)
    };
    let videos = pts.iter().map(|p| p.video).max().unwrap_or(0) + 1;
    let shade = |v: usize| (80 + 175 * v / videos.max(2).saturating_sub(1).max(1)).min(255) as u8;
    let mut img = vec![0u8; size * size];
    let mut put = |x: f64, y: f64, g: u8| {
        let (xi, yi) = (x.round() as isize, y.round() as isize);
        if xi >= 0 && yi >= 0 && (xi as usize) < size && (yi as usize) < size {
            let k = yi as usize * size + xi as usize;
            img[k] = img[k].max(g);
        }
    };
    for v in 0..videos {
        let g = shade(v);
        let mut track: Vec<&LatentPoint> = pts.iter().copied().filter(|p| p.video == v).collect();
        track.sort_by_key(|p| p.frame);
        for w in track.windows(2) {
            let (a, b) = (to_px(&w[0].values), to_px(&w[1].values));
            let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                put(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), g / 2);
            }
        }
        for p in &track {
            let (x, y) = to_px(&p.values);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    put(x + dx as f64, y + dy as f64, g);
                }
            }
        }
    }
    let mut out = format!("P5\n{size} {size}\n255\n").into_bytes();
    out.extend_from_slice(&img);
    Some(out)
}

/// Encode `videos` held-out videos, sample one latent per frame, and write
/// `latents.csv` plus a scatter image for each 2-D factor.
pub fn plot_latents(checkpoint: &Path, videos: usize, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    if videos == 0 {
        return Err(Error::Invalid("need at least one video".into()));
    }
    fs::create_dir_all(out)?;
    let (cfg, mut model) = load(checkpoint)?;
    let set = cfg.data.eval_set(cfg.prior.n_frames, videos, seed)?;
    let seqs = sample_latents(&mut model, &set, derive_seed(seed, &[tag::PLOT]))?;
    let points = latent_points(&seqs, &cfg.prior);
    let csv = out.join("latents.csv");
    fs::write(&csv, latent_csv(&points))?;
    let mut paths = vec![csv];
    for factor in [Factor::Static, Factor::Temporal] {
        if let Some(img) = scatter_pgm(&points, factor, 256) {
            let p = out.join(format!("latents_{}.pgm", factor.name()));
            fs::write(&p, img)?;
            paths.push(p);
        }
    }
    let mut meta = eval_meta(&cfg, checkpoint, &EvalConfig { videos, seed, ..EvalConfig::default() })?;
    if let Some(r) = within_between_ratio(&points, Factor::Static) {
        meta.insert("plot.static_within_between_ratio".into(), r.to_string());
    }
    let manifest = write_manifest(out, "plot-latents", seed, &meta, &paths)?;
    paths.push(manifest);
    Ok(paths)
}
