//! Acceptance suite. One line per criterion; details are indented below it.
//!
//! Criteria 1-5 and 8 are exact checks and decide the exit status. The
//! desk-scale training orderings (6, 7, 9) are reported but do not gate it.
//! Set `FSVAE_ACCEPTANCE_SKIP_TRAINING=1` to skip the training runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use fsvae::cli::{self, DataSplit, Factor};
use fsvae::data::shard::{decode_shard, encode_shard};
use fsvae::data::{parse_idx, serialize_idx, IdxData, VideoBatch};
use fsvae::elbo::Variant;
use fsvae::eval::{evaluate_encodings, evaluate_model, EvalConfig, Encodings, ModelEval};
use fsvae::nn::checkpoint::Checkpoint;
use fsvae::nn::Preset;
use fsvae::prior::PriorConfig;
use fsvae::trainer::{checkpoint_path, TrainConfig, Trainer, FINAL_CHECKPOINT};
use fsvae::verify::{self, Check, McOptions};

const SEED: u64 = 0;
const DESK_ITERATIONS: u64 = 3000;
const DESK_BATCH: usize = 4;
const DESK_LR: f64 = 1e-3;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];
const DESK_EVAL_VIDEOS: usize = 200;
const DESK_EVAL_SEED: u64 = 1000;

struct Outcome {
    id: u32,
    title: String,
    passed: Option<bool>,
    gating: bool,
    summary: String,
    details: Vec<String>,
    secs: f64,
}

impl Outcome {
    fn status(&self) -> &'static str {
        match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        }
    }

    fn print(&self) {
        println!("{} criterion {}: {} | {} [{:.1}s]", self.status(), self.id, self.title, self.summary, self.secs);
        for d in &self.details {
            println!("    {d}");
        }
    }
}

fn from_checks(id: u32, title: &str, checks: Vec<Check>, budget: Option<f64>, secs: f64) -> Outcome {
    let all = checks.iter().all(|c| c.passed);
    let in_time = budget.is_none_or(|b| secs <= b);
    let worst = checks.iter().map(|c| c.deviation / c.tolerance).fold(0.0, f64::max);
    let mut summary = format!("{} checks, worst deviation/tolerance {worst:.3}", checks.len());
    if let Some(b) = budget {
        write!(summary, ", runtime {secs:.1}s of {b:.0}s").unwrap();
    }
    Outcome {
        id,
        title: title.into(),
        passed: Some(all && in_time),
        gating: true,
        summary,
        details: checks.iter().map(Check::line).collect(),
        secs,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn failed(id: u32, title: &str, e: impl std::fmt::Display, secs: f64) -> Outcome {
    Outcome { id, title: title.into(), passed: Some(false), gating: true, summary: format!("error: {e}"), details: vec![], secs }
}

fn mc_kl() -> Outcome {
    let title = "analytic KL matches Monte-Carlo within 4 standard errors";
    let (r, secs) = timed(|| verify::mc_kl_checks(&PriorConfig::default(), &McOptions { seed: SEED, ..McOptions::default() }));
    match r {
        Ok(c) => from_checks(1, title, c, Some(120.0), secs),
        Err(e) => failed(1, title, e, secs),
    }
}

fn static_normalization() -> Outcome {
    let title = "static prior density normalization";
    let (r, secs) = timed(|| -> fsvae::Result<Vec<Check>> {
        Ok(vec![
            Check::new("quadrature over [-8,8]^2 minus 1", (verify::static_quadrature(0.01, 2000)? - 1.0).abs(), 1e-3),
            Check::new("N=1 density vs Normal(0, 1 + sigma2_s)", verify::static_single_frame_gap(0.01)?, 1e-10),
        ])
    });
    match r {
        Ok(c) => from_checks(2, title, c, None, secs),
        Err(e) => failed(2, title, e, secs),
    }
}

fn gradients() -> Outcome {
    let title = "loss-term and layer gradients vs central differences";
    let (r, secs) = timed(|| -> fsvae::Result<Vec<Check>> {
        let mut c = verify::loss_gradient_checks(1e-5, SEED)?;
        c.extend(verify::layer_gradient_checks(1e-5, SEED));
        Ok(c)
    });
    match r {
        Ok(c) => from_checks(3, title, c, Some(300.0), secs),
        Err(e) => failed(3, title, e, secs),
    }
}

fn collapse() -> Outcome {
    let title = "collapse identities";
    let (r, secs) = timed(|| verify::collapse_checks(1e-12, SEED));
    match r {
        Ok(c) => from_checks(4, title, c, None, secs),
        Err(e) => failed(4, title, e, secs),
    }
}

/// Encodings built directly from ground truth: one-hot digit class followed
/// by the scaled centroid.
fn truth_encodings(set: &VideoBatch, classes: usize) -> Encodings {
    let mut values = Vec::with_capacity(set.batch * set.n_frames * (classes + 2));
    for v in 0..set.batch {
        for i in 0..set.n_frames {
            let mut one_hot = vec![0.0; classes];
            one_hot[set.labels[v] as usize] = 1.0;
            values.extend(one_hot);
            let p = set.positions[v * set.n_frames + i];
            values.extend([p[0] as f64 / 64.0, p[1] as f64 / 64.0]);
        }
    }
    Encodings {
        videos: set.batch,
        frames: set.n_frames,
        dim: classes + 2,
        values,
        labels: set.labels.clone(),
        positions: set.positions.clone(),
    }
}

fn noise_encodings(set: &VideoBatch, dim: usize, seed: u64) -> Encodings {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..set.batch * set.n_frames * dim).map(|_| StandardNormal.sample(&mut r)).collect();
    Encodings { videos: set.batch, frames: set.n_frames, dim, values, labels: set.labels.clone(), positions: set.positions.clone() }
}

fn oracle_dscores() -> Outcome {
    let title = "oracle encoders separate on the d-score";
    let (r, secs) = timed(|| -> fsvae::Result<(f64, f64, Vec<String>)> {
        let base = TrainConfig::default();
        let classes = base.data.digit_classes.len();
        let set = base.data.eval_set(base.prior.n_frames, 200, SEED)?;
        let ec = EvalConfig { videos: set.batch, seed: SEED, ..EvalConfig::default() };
        let mut truth_cfg = base.clone();
        truth_cfg.prior = PriorConfig { f_s: classes, f_t: 2, ..base.prior };
        let truth = evaluate_encodings(&truth_encodings(&set, classes), &truth_cfg, &ec)?;
        let mut noise_cfg = base.clone();
        noise_cfg.prior = PriorConfig { f_s: 2, f_t: 2, ..base.prior };
        let noise = evaluate_encodings(&noise_encodings(&set, 4, SEED), &noise_cfg, &ec)?;
        let details = vec![
            format!("ground truth: d = {:.3}, accuracies {:?}", truth.dscore.score, rounded(&truth.dscore.accuracies)),
            format!("noise:        d = {:.3}, accuracies {:?}", noise.dscore.score, rounded(&noise.dscore.accuracies)),
        ];
        Ok((truth.dscore.score, noise.dscore.score, details))
    });
    match r {
        Ok((t, n, details)) => Outcome {
            id: 5,
            title: title.into(),
            passed: Some(t >= 3.0 && (0.7..=1.4).contains(&n) && secs <= 300.0),
            gating: true,
            summary: format!("ground truth {t:.3} (need >= 3), noise {n:.3} (need in [0.7, 1.4]), runtime {secs:.1}s of 300s"),
            details,
            secs,
        },
        Err(e) => failed(5, title, e, secs),
    }
}

fn rounded(a: &[f64]) -> Vec<f64> {
    a.iter().map(|v| (v * 1000.0).round() / 1000.0).collect()
}

fn tiny_config() -> TrainConfig {
    let mut cfg = TrainConfig {
        iterations: 6,
        batch_videos: 2,
        preset: Preset::Desk,
        beta: 4.0,
        seed: 21,
        checkpoint_every: 3,
        ..TrainConfig::default()
    };
    cfg.prior = PriorConfig { n_frames: 4, ..PriorConfig::default() };
    cfg.data.digit_classes = vec![0, 1, 2];
    cfg.data.sprites_per_class = 10;
    cfg
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> fsvae::Result<bool> {
    for n in names {
        if std::fs::read(a.join(n))? != std::fs::read(b.join(n))? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn determinism_checks(dir: &Path) -> fsvae::Result<Vec<(String, bool)>> {
    let cfg = tiny_config();
    let mut out = Vec::new();
    let (a, b) = (dir.join("train_a"), dir.join("train_b"));
    cli::train(&cfg, &a)?;
    cli::train(&cfg, &b)?;
    out.push(("metric logs bit-identical".to_string(), same_files(&a, &b, &[cli::TRAIN_LOG])?));
    let ck3 = checkpoint_path(Path::new(""), 3);
    let ck3 = ck3.to_str().unwrap_or_default();
    out.push(("checkpoints bit-identical".into(), same_files(&a, &b, &[ck3, FINAL_CHECKPOINT])?));

    for split in [DataSplit::Train, DataSplit::Eval] {
        let (sa, sb) = (dir.join(format!("{split:?}_a")), dir.join(format!("{split:?}_b")));
        let pa = cli::gen_data(&cfg, split, 7, 3, &sa)?;
        let pb = cli::gen_data(&cfg, split, 7, 3, &sb)?;
        let mut same = pa.len() == pb.len();
        for (x, y) in pa.iter().zip(&pb) {
            same &= std::fs::read(x)? == std::fs::read(y)?;
        }
        out.push((format!("{split:?} shards bit-identical"), same));
    }

    let ck = a.join(FINAL_CHECKPOINT);
    let pgm = |sub: &str| -> fsvae::Result<Vec<PathBuf>> {
        let d = dir.join(sub);
        let mut p = cli::swap(&ck, 5, &d)?;
        p.extend(cli::interpolate(&ck, 5, 4, Factor::Static, &d)?);
        p.extend(cli::plot_latents(&ck, 3, 5, &d)?);
        Ok(p.into_iter().filter(|p| p.extension().is_some_and(|e| e == "pgm")).collect())
    };
    let (ga, gb) = (pgm("pgm_a")?, pgm("pgm_b")?);
    let mut same = !ga.is_empty() && ga.len() == gb.len();
    for (x, y) in ga.iter().zip(&gb) {
        same &= std::fs::read(x)? == std::fs::read(y)?;
    }
    out.push((format!("{} PGM outputs bit-identical", ga.len()), same));

    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    let images = IdxData { magic: fsvae::data::idx::IMAGE_MAGIC, dims: vec![5, 28, 28], data: (0..5 * 28 * 28).map(|_| r.random()).collect() };
    let labels = IdxData { magic: fsvae::data::idx::LABEL_MAGIC, dims: vec![5], data: (0..5).map(|_| r.random_range(0..10)).collect() };
    let mut idx_ok = true;
    for d in [&images, &labels] {
        let bytes = serialize_idx(d);
        let back = parse_idx(&bytes)?;
        idx_ok &= &back == d && serialize_idx(&back) == bytes;
    }
    out.push(("IDX round trip bit-exact".into(), idx_ok));

    let batch = cfg.data.eval_set(cfg.prior.n_frames, 3, 9)?;
    let bytes = encode_shard(&batch)?;
    let back = decode_shard(&bytes)?;
    out.push(("shard round trip bit-exact".into(), back == batch && encode_shard(&back)? == bytes));

    let full = std::fs::read_to_string(a.join(cli::TRAIN_LOG))?;
    let mut resumed = Trainer::<f32>::resume(&Checkpoint::load(&a.join(ck3))?)?;
    let mut tail = Vec::new();
    resumed.run(&mut tail, None)?;
    let expected: String = full.lines().skip(1 + 3).map(|l| format!("{l}\n")).collect();
    out.push(("resume from iteration 3 reproduces the log".into(), String::from_utf8_lossy(&tail) == expected));
    Ok(out)
}

fn determinism() -> Outcome {
    let title = "determinism and formats";
    let (r, secs) = timed(|| -> fsvae::Result<Vec<(String, bool)>> {
        let dir = tempfile::tempdir()?;
        determinism_checks(dir.path())
    });
    match r {
        Ok(checks) => Outcome {
            id: 8,
            title: title.into(),
            passed: Some(checks.iter().all(|c| c.1)),
            gating: true,
            summary: format!("{} of {} checks hold", checks.iter().filter(|c| c.1).count(), checks.len()),
            details: checks.iter().map(|(n, ok)| format!("{} {n}", if *ok { "PASS" } else { "FAIL" })).collect(),
            secs,
        },
        Err(e) => failed(8, title, e, secs),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    variant: Variant,
    beta: f64,
    seed: u64,
}

fn desk_config(run: Run) -> TrainConfig {
    let mut cfg = TrainConfig {
        iterations: DESK_ITERATIONS,
        batch_videos: DESK_BATCH,
        lr0: DESK_LR,
        lr_step: DESK_ITERATIONS,
        preset: Preset::Desk,
        variant: run.variant,
        beta: run.beta,
        seed: run.seed,
        ..TrainConfig::default()
    };
    cfg.data.digit_classes = vec![0, 1, 2];
    cfg
}

fn desk_run(run: Run) -> fsvae::Result<(ModelEval, f64)> {
    let t = Instant::now();
    let cfg = desk_config(run);
    let mut trainer = Trainer::<f32>::new(cfg.clone())?;
    trainer.run(&mut std::io::sink(), None)?;
    let ec = EvalConfig { videos: DESK_EVAL_VIDEOS, seed: DESK_EVAL_SEED, ..EvalConfig::default() };
    let e = evaluate_model(&mut trainer.model, &cfg, &ec)?;
    let secs = t.elapsed().as_secs_f64();
    eprintln!(
        "  desk run {} beta={} seed={}: d={:.3} transfer={:.3} ({secs:.0}s)",
        run.variant, run.beta, run.seed, e.dscore.score, e.transfer
    );
    Ok((e, secs))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn desk_orderings(csv_path: &Path) -> Vec<Outcome> {
    let titles = [
        (6, "desk d-score ordering factored > slow > vae at beta 4, gaps >= 0.2"),
        (7, "desk static transfer: factored exceeds slow by >= 0.05"),
        (9, "desk factored d-score at beta 4 >= beta 1 - 0.1"),
    ];
    let skip = |summary: String, secs: f64| -> Vec<Outcome> {
        titles
            .iter()
            .map(|&(id, t)| Outcome { id, title: t.into(), passed: None, gating: false, summary: summary.clone(), details: vec![], secs })
            .collect()
    };
    if std::env::var_os("FSVAE_ACCEPTANCE_SKIP_TRAINING").is_some() {
        return skip("FSVAE_ACCEPTANCE_SKIP_TRAINING is set".into(), 0.0);
    }
    let mut runs = Vec::new();
    for (variant, beta) in [(Variant::Factored, 4.0), (Variant::Slow, 4.0), (Variant::Vae, 4.0), (Variant::Factored, 1.0)] {
        for seed in DESK_SEEDS {
            runs.push(Run { variant, beta, seed });
        }
    }
    eprintln!(
        "  training {} desk runs ({DESK_ITERATIONS} iterations, batch {DESK_BATCH}) on {} threads",
        runs.len(),
        rayon::current_num_threads()
    );
    let (results, secs) = timed(|| runs.par_iter().map(|&r| desk_run(r).map(|e| (r, e))).collect::<fsvae::Result<Vec<_>>>());
    let results = match results {
        Ok(r) => r,
        Err(e) => return skip(format!("error: {e}"), secs),
    };
    let mut csv = String::from("variant,beta,seed,dscore,transfer,transfer_baseline,acc_hs_ys,acc_hs_yt,acc_ht_yt,acc_ht_ys,seconds\n");
    for (r, (e, s)) in &results {
        let a = e.dscore.accuracies;
        writeln!(csv, "{},{},{},{},{},{},{},{},{},{},{s:.1}", r.variant, r.beta, r.seed, e.dscore.score, e.transfer, e.transfer_baseline, a[0], a[1], a[2], a[3]).unwrap();
    }
    let _ = std::fs::write(csv_path, &csv);
    let avg = |variant: Variant, beta: f64, f: fn(&ModelEval) -> f64| {
        mean(results.iter().filter(|(r, _)| r.variant == variant && r.beta == beta).map(|(_, (e, _))| f(e)))
    };
    let d = |e: &ModelEval| e.dscore.score;
    let tr = |e: &ModelEval| e.transfer;
    let (df, ds, dv, df1) = (avg(Variant::Factored, 4.0, d), avg(Variant::Slow, 4.0, d), avg(Variant::Vae, 4.0, d), avg(Variant::Factored, 1.0, d));
    let (tf, ts) = (avg(Variant::Factored, 4.0, tr), avg(Variant::Slow, 4.0, tr));
    let per_run: Vec<String> = results
        .iter()
        .map(|(r, (e, s))| format!("{} beta={} seed={}: d={:.3} transfer={:.3} ({s:.0}s)", r.variant, r.beta, r.seed, e.dscore.score, e.transfer))
        .collect();
    let budget = format!("wall time {:.1} min (budget 90 min on a laptop CPU), results in {}", secs / 60.0, csv_path.display());
    vec![
        Outcome {
            id: 6,
            title: titles[0].1.into(),
            passed: Some(df - ds >= 0.2 && ds - dv >= 0.2),
            gating: false,
            summary: format!("mean d factored {df:.3}, slow {ds:.3}, vae {dv:.3}; gaps {:.3}, {:.3}", df - ds, ds - dv),
            details: per_run.into_iter().chain([budget]).collect(),
            secs,
        },
        Outcome {
            id: 7,
            title: titles[1].1.into(),
            passed: Some(tf - ts >= 0.05),
            gating: false,
            summary: format!("mean transfer factored static {tf:.3}, slow all features {ts:.3}; gap {:.3}", tf - ts),
            details: vec![],
            secs: 0.0,
        },
        Outcome {
            id: 9,
            title: titles[2].1.into(),
            passed: Some(df >= df1 - 0.1),
            gating: false,
            summary: format!("mean d factored beta 4 {df:.3}, beta 1 {df1:.3}; difference {:.3}", df - df1),
            details: vec![],
            secs: 0.0,
        },
    ]
}

fn main() -> ExitCode {
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let t = Instant::now();
    let mut outcomes = Vec::new();
    for f in [mc_kl, static_normalization, gradients, collapse, oracle_dscores, determinism] {
        let o = f();
        o.print();
        outcomes.push(o);
    }
    for o in desk_orderings(&out_dir.join("acceptance_desk_runs.csv")) {
        o.print();
        outcomes.push(o);
    }
    outcomes.sort_by_key(|o| o.id);
    println!();
    for o in &outcomes {
        println!("{} {}{}", o.status(), o.id, if o.gating { "" } else { " (reported, not gating)" });
    }
    let gating_failures = outcomes.iter().filter(|o| o.gating && o.passed != Some(true)).count();
    let failures = outcomes.iter().filter(|o| o.passed == Some(false)).count();
    println!(
        "acceptance: {} criteria, {failures} failed ({gating_failures} gating), {:.1} min",
        outcomes.len(),
        t.elapsed().as_secs_f64() / 60.0
    );
    if gating_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
