//! Linear-probe evaluation: one-vs-rest linear SVMs, the disentanglement
//! score over static/temporal feature splits, and static-label transfer.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{DatasetKind, VideoBatch};
use crate::elbo::Variant;
use crate::error::{Error, Result};
use crate::nn::{Mode, Model, FRAME};
use crate::real::Real;
use crate::rng::{self, derive_seed, tag};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub l2: f64,
    pub epochs: usize,
    /// Step size at epoch `e` (1-based) is `step0 / sqrt(e)`.
    pub step0: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { l2: 1e-3, epochs: 200, step0: 0.1 }
    }
}

/// One-vs-rest linear classifier on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub classes: Vec<u32>,
    pub dim: usize,
    /// `[classes, dim]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub params: SvmParams,
}

impl LinearClassifier {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim).map(|j| (x[j] - self.mean[j]) * self.scale[j]).collect();
        (0..self.classes.len())
            .map(|c| self.bias[c] + self.weights[c * self.dim..(c + 1) * self.dim].iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Highest-scoring class; ties go to the smaller label.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let s = self.scores(x);
        let mut best = 0;
        for c in 1..s.len() {
            if s[c] > s[best] {
                best = c;
            }
        }
        self.classes[best]
    }

    pub fn accuracy(&self, x: &[f64], y: &[u32]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let hits = y.iter().enumerate().filter(|&(i, &t)| self.predict(&x[i * self.dim..(i + 1) * self.dim]) == t).count();
        hits as f64 / y.len() as f64
    }
}

/// Train a one-vs-rest linear SVM on row-major `x` (`y.len()` rows of `dim`)
/// by per-sample subgradient descent on hinge loss plus `l2/2 * |w|^2`.
pub fn train_linear_svm(x: &[f64], dim: usize, y: &[u32], params: SvmParams, seed: u64) -> Result<LinearClassifier> {
    let m = y.len();
    if dim == 0 || x.len() != m * dim {
        return Err(Error::Shape(format!("{} feature values for {m} rows of width {dim}", x.len())));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature value at index {i}")));
    }
    let mut classes: Vec<u32> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Invalid(format!("need at least two classes, got {}", classes.len())));
    }
    let mut mean = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        for j in 0..dim {
            mean[j] += row[j];
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    for row in x.chunks_exact(dim) {
        for j in 0..dim {
            var[j] += (row[j] - mean[j]).powi(2);
        }
    }
    let scale: Vec<f64> = var.iter().map(|v| {
        let sd = (v / m as f64).sqrt();
        if sd > 1e-12 { 1.0 / sd } else { 0.0 }
    }).collect();
    let z: Vec<f64> = x.chunks_exact(dim).flat_map(|row| (0..dim).map(|j| (row[j] - mean[j]) * scale[j]).collect::<Vec<_>>()).collect();
    let target: Vec<usize> = y.iter().map(|t| classes.binary_search(t).unwrap()).collect();

    let c = classes.len();
    let mut w = vec![0.0; c * dim];
    let mut b = vec![0.0; c];
    let mut order: Vec<usize> = (0..m).collect();
    let mut r = rng::stream(seed, &[tag::SVM]);
    for epoch in 1..=params.epochs {
        let eta = params.step0 / (epoch as f64).sqrt();
        let shrink = 1.0 - eta * params.l2;
        order.shuffle(&mut r);
        for &i in &order {
            let zi = &z[i * dim..(i + 1) * dim];
            for k in 0..c {
                let sign = if target[i] == k { 1.0 } else { -1.0 };
                let wk = &mut w[k * dim..(k + 1) * dim];
                let margin = sign * (b[k] + wk.iter().zip(zi).map(|(a, v)| a * v).sum::<f64>());
                wk.iter_mut().for_each(|a| *a *= shrink);
                if margin < 1.0 {
                    wk.iter_mut().zip(zi).for_each(|(a, v)| *a += eta * sign * v);
                    b[k] += eta * sign;
                }
            }
        }
    }
    Ok(LinearClassifier { classes, dim, weights: w, bias: b, mean, scale, params })
}

/// 3x3 grid cell of a pixel position, row-major; terciles `[0,21)`, `[21,43)`, `[43,64)`.
pub fn location_bucket(position: [f64; 2]) -> Result<u32> {
    let tercile = |v: f64| -> Result<u32> {
        if !(0.0..FRAME as f64).contains(&v) {
            return Err(Error::Invalid(format!("position {v} outside the {FRAME}x{FRAME} canvas")));
        }
        Ok(if v < 21.0 { 0 } else if v < 43.0 { 1 } else { 2 })
    };
    Ok(3 * tercile(position[0])? + tercile(position[1])?)
}

/// True iff the presented frame indices are monotonically increasing or decreasing.
pub fn temporal_order_label(idx: [usize; 3]) -> Result<bool> {
    if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
        return Err(Error::Invalid(format!("duplicate frame indices {idx:?}")));
    }
    Ok((idx[0] < idx[1] && idx[1] < idx[2]) || (idx[0] > idx[1] && idx[1] > idx[2]))
}

/// Per-frame encodings of a set of videos with their ground-truth annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Encodings {
    pub videos: usize,
    pub frames: usize,
    pub dim: usize,
    /// `[videos, frames, dim]`
    pub values: Vec<f64>,
    /// Static label per video.
    pub labels: Vec<u32>,
    /// Object centroid per frame, `[videos * frames]`.
    pub positions: Vec<[f32; 2]>,
}

impl Encodings {
    pub fn validate(&self) -> Result<()> {
        let count = self.videos * self.frames;
        if self.values.len() != count * self.dim || self.labels.len() != self.videos || self.positions.len() != count {
            return Err(Error::Shape("inconsistent encodings".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("encoding value at index {i}")));
        }
        Ok(())
    }

    fn at(&self, video: usize, frame: usize) -> &[f64] {
        let k = video * self.frames + frame;
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Keep only the listed feature columns, in the given order.
    pub fn select(&self, features: &[usize]) -> Encodings {
        let values = (0..self.videos * self.frames)
            .flat_map(|k| features.iter().map(move |&j| self.values[k * self.dim + j]))
            .collect();
        Encodings { dim: features.len(), values, ..self.clone() }
    }
}

/// Posterior means of `batch` under `model` in inference mode.
pub fn encode_means<T: Real>(model: &mut Model<T>, batch: &VideoBatch, videos_per_chunk: usize) -> Result<Encodings> {
    let n = batch.n_frames;
    let px = VideoBatch::PIXELS;
    let chunk = videos_per_chunk.max(1);
    let mut values = Vec::with_capacity(batch.batch * n * model.cfg.latent);
    for v0 in (0..batch.batch).step_by(chunk) {
        let vc = chunk.min(batch.batch - v0);
        let frames = &batch.frames[v0 * n * px..(v0 + vc) * n * px];
        values.extend(model.encode(frames, vc, n, Mode::Infer)?.mu);
    }
    Ok(Encodings {
        videos: batch.batch,
        frames: n,
        dim: model.cfg.latent,
        values,
        labels: batch.labels.clone(),
        positions: batch.positions.clone(),
    })
}

/// Classification target for a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Per-frame: the video's static label.
    Static,
    /// Per-frame: the 3x3 location bucket of the object.
    Location,
    /// Per-triplet: whether three frames are presented in temporal order.
    TemporalOrder,
}

/// Rows for one probe: row-major features, labels and the owning video of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    pub videos: Vec<usize>,
}

pub const TRIPLETS_PER_VIDEO: usize = 8;

/// Build the probe rows for `target` from the feature columns `subset`.
pub fn feature_table(enc: &Encodings, subset: &[usize], target: Target, seed: u64) -> Result<FeatureTable> {
    let mut t = FeatureTable { dim: subset.len(), features: Vec::new(), labels: Vec::new(), videos: Vec::new() };
    match target {
        Target::Static | Target::Location => {
            for v in 0..enc.videos {
                for i in 0..enc.frames {
                    let h = enc.at(v, i);
                    t.features.extend(subset.iter().map(|&j| h[j]));
                    t.labels.push(match target {
                        Target::Static => enc.labels[v],
                        _ => {
                            let p = enc.positions[v * enc.frames + i];
                            location_bucket([p[0] as f64, p[1] as f64])?
                        }
                    });
                    t.videos.push(v);
                }
            }
        }
        Target::TemporalOrder => {
            if enc.frames < 3 {
                return Err(Error::Invalid("temporal-order probe needs at least three frames".into()));
            }
            t.dim = 3 * subset.len();
            for v in 0..enc.videos {
                let mut r = rng::stream(seed, &[tag::SPLIT, v as u64]);
                for k in 0..TRIPLETS_PER_VIDEO {
                    let mut idx = rand::seq::index::sample(&mut r, enc.frames, 3).into_vec();
                    idx.sort_unstable();
                    let (a, b, c) = (idx[0], idx[1], idx[2]);
                    let order = if k % 2 == 0 {
                        if r.random_bool(0.5) { [a, b, c] } else { [c, b, a] }
                    } else {
                        [[a, c, b], [b, a, c], [b, c, a], [c, a, b]][r.random_range(0..4)]
                    };
                    for &f in &order {
                        let h = enc.at(v, f);
                        t.features.extend(subset.iter().map(|&j| h[j]));
                    }
                    t.labels.push(temporal_order_label(order)? as u32);
                    t.videos.push(v);
                }
            }
        }
    }
    Ok(t)
}

/// Videos assigned to the held-out 20%.
pub fn held_out_videos(videos: usize, seed: u64) -> Vec<bool> {
    let mut ids: Vec<usize> = (0..videos).collect();
    ids.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
    let n_test = (videos / 5).max(1);
    let mut test = vec![false; videos];
    for &v in &ids[..n_test.min(videos)] {
        test[v] = true;
    }
    test
}

/// Held-out accuracy of a linear probe trained on the other 80% of videos.
pub fn probe_accuracy(table: &FeatureTable, test: &[bool], params: SvmParams, seed: u64) -> Result<f64> {
    let d = table.dim;
    let (mut xtr, mut ytr, mut xte, mut yte) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, &v) in table.videos.iter().enumerate() {
        let row = &table.features[i * d..(i + 1) * d];
        if test[v] {
            xte.extend_from_slice(row);
            yte.push(table.labels[i]);
        } else {
            xtr.extend_from_slice(row);
            ytr.push(table.labels[i]);
        }
    }
    if yte.is_empty() {
        return Err(Error::Invalid("empty held-out split".into()));
    }
    let clf = train_linear_svm(&xtr, d, &ytr, params, seed)?;
    Ok(clf.accuracy(&xte, &yte))
}

/// Fraction of held-out rows carrying the most common training label.
pub fn majority_baseline(table: &FeatureTable, test: &[bool]) -> f64 {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for (i, &v) in table.videos.iter().enumerate() {
        if !test[v] {
            *counts.entry(table.labels[i]).or_default() += 1;
        }
    }
    let Some((&top, _)) = counts.iter().max_by_key(|&(&l, &c)| (c, std::cmp::Reverse(l))) else {
        return 0.0;
    };
    let (hit, total) = table
        .videos
        .iter()
        .enumerate()
        .filter(|&(_, &v)| test[v])
        .fold((0, 0), |(h, t), (i, _)| (h + usize::from(table.labels[i] == top), t + 1));
    hit as f64 / total.max(1) as f64
}

/// Probe accuracies keyed by feature subset, so each subset/target pair is trained once.
pub struct Prober<'a> {
    pub enc: &'a Encodings,
    pub params: SvmParams,
    pub seed: u64,
    test: Vec<bool>,
    cache: HashMap<(Vec<usize>, Target), f64>,
}

impl<'a> Prober<'a> {
    pub fn new(enc: &'a Encodings, params: SvmParams, seed: u64) -> Result<Self> {
        enc.validate()?;
        if enc.videos < 5 {
            return Err(Error::Invalid(format!("need at least 5 videos to evaluate, got {}", enc.videos)));
        }
        Ok(Prober { enc, params, seed, test: held_out_videos(enc.videos, seed), cache: HashMap::new() })
    }

    pub fn accuracy(&mut self, subset: &[usize], target: Target) -> Result<f64> {
        let key = (subset.to_vec(), target);
        if let Some(&a) = self.cache.get(&key) {
            return Ok(a);
        }
        let table = feature_table(self.enc, subset, target, self.seed)?;
        // The shuffle seed depends only on the target, so permuting feature
        // columns permutes the learned weights and leaves predictions unchanged.
        let a = probe_accuracy(&table, &self.test, self.params, derive_seed(self.seed, &[target as u64]))?;
        self.cache.insert(key, a);
        Ok(a)
    }

    pub fn baseline(&self, subset: &[usize], target: Target) -> Result<f64> {
        Ok(majority_baseline(&feature_table(self.enc, subset, target, self.seed)?, &self.test))
    }

    pub fn held_out_rows(&self, target: Target) -> usize {
        let per_video = if target == Target::TemporalOrder { TRIPLETS_PER_VIDEO } else { self.enc.frames };
        self.test.iter().filter(|&&t| t).count() * per_video
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// The model's own boundary: the first `f_s` features are static.
    Natural(usize),
    /// Best of all `2^d - 2` assignments of features to the two sets.
    MaxOverSplits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DScore {
    pub score: f64,
    pub static_features: Vec<usize>,
    pub temporal_features: Vec<usize>,
    /// `[Acc(H_s, y_s), Acc(H_s, y_t), Acc(H_t, y_t), Acc(H_t, y_s)]`
    pub accuracies: [f64; 4],
    /// Splits skipped because a denominator accuracy was zero.
    pub skipped: usize,
}

/// `sqrt(a_s * a_t)` with `a_s = Acc(H_s,y_s)/Acc(H_s,y_t)`, `a_t = Acc(H_t,y_t)/Acc(H_t,y_s)`;
/// `None` when a denominator is zero.
pub fn score_from_accuracies(acc: [f64; 4]) -> Option<f64> {
    if acc[1] == 0.0 || acc[3] == 0.0 {
        return None;
    }
    Some(((acc[0] / acc[1]) * (acc[2] / acc[3])).sqrt())
}

/// Disentanglement score of the encodings for the given static and temporal targets.
pub fn disentanglement_score(prober: &mut Prober<'_>, mode: SplitMode, temporal: Target) -> Result<DScore> {
    let d = prober.enc.dim;
    if d < 2 {
        return Err(Error::Invalid(format!("need at least two features, got {d}")));
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = match mode {
        SplitMode::Natural(f_s) => {
            if f_s == 0 || f_s >= d {
                return Err(Error::Invalid(format!("natural split needs 0 < f_s < {d}, got {f_s}")));
            }
            vec![((0..f_s).collect(), (f_s..d).collect())]
        }
        SplitMode::MaxOverSplits => {
            if d > 16 {
                return Err(Error::Invalid(format!("max-over-splits enumeration limited to 16 features, got {d}")));
            }
            (1..(1u32 << d) - 1)
                .map(|mask| (0..d).partition::<Vec<usize>, _>(|&j| mask >> j & 1 == 1))
                .collect()
        }
    };
    let mut best: Option<DScore> = None;
    let mut skipped = 0;
    for (hs, ht) in splits {
        let acc = [
            prober.accuracy(&hs, Target::Static)?,
            prober.accuracy(&hs, temporal)?,
            prober.accuracy(&ht, temporal)?,
            prober.accuracy(&ht, Target::Static)?,
        ];
        match score_from_accuracies(acc) {
            None => skipped += 1,
            Some(score) => {
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(DScore { score, static_features: hs, temporal_features: ht, accuracies: acc, skipped: 0 });
                }
            }
        }
    }
    let mut out = best.ok_or_else(|| Error::Invalid("every split had a zero denominator accuracy".into()))?;
    out.skipped = skipped;
    Ok(out)
}

/// Held-out static-label accuracy of a probe on the given features.
pub fn transfer_accuracy(prober: &mut Prober<'_>, features: &[usize]) -> Result<f64> {
    prober.accuracy(features, Target::Static)
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub beta: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("model,beta,seed,metric,value\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.model, r.beta, r.seed, r.metric, r.value));
    }
    s
}

/// Settings for evaluating a trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub videos: usize,
    pub seed: u64,
    pub svm: SvmParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { videos: 200, seed: 0, svm: SvmParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub dscore: DScore,
    /// Held-out static accuracy: static features for the factored model, all features otherwise.
    pub transfer: f64,
    pub transfer_baseline: f64,
    pub transfer_rows: usize,
}

/// The temporal probe for a dataset.
pub fn temporal_target(kind: DatasetKind) -> Target {
    match kind {
        DatasetKind::Bouncing => Target::Location,
        DatasetKind::Shapes => Target::TemporalOrder,
    }
}

/// Natural split for the factored model, max over splits for the benchmarks.
pub fn split_mode(cfg: &TrainConfig) -> SplitMode {
    let p = &cfg.prior;
    if cfg.variant == Variant::Factored && p.f_s > 0 && p.f_t > 0 {
        SplitMode::Natural(p.f_s)
    } else {
        SplitMode::MaxOverSplits
    }
}

/// Feature columns used for static-label transfer.
pub fn transfer_features(cfg: &TrainConfig) -> Vec<usize> {
    if cfg.variant == Variant::Factored && cfg.prior.f_s > 0 {
        (0..cfg.prior.f_s).collect()
    } else {
        (0..cfg.prior.total_width()).collect()
    }
}

/// Encode a fresh held-out evaluation set and compute the d-score and transfer accuracy.
pub fn evaluate_model<T: Real>(model: &mut Model<T>, cfg: &TrainConfig, ec: &EvalConfig) -> Result<ModelEval> {
    if model.cfg.latent != cfg.prior.total_width() {
        return Err(Error::Shape(format!(
            "model has {} latent features, config {}",
            model.cfg.latent,
            cfg.prior.total_width()
        )));
    }
    let set = cfg.data.eval_set(cfg.prior.n_frames, ec.videos, ec.seed)?;
    let enc = encode_means(model, &set, 8)?;
    evaluate_encodings(&enc, cfg, ec)
}

pub fn evaluate_encodings(enc: &Encodings, cfg: &TrainConfig, ec: &EvalConfig) -> Result<ModelEval> {
    let mut prober = Prober::new(enc, ec.svm, ec.seed)?;
    let dscore = disentanglement_score(&mut prober, split_mode(cfg), temporal_target(cfg.data.kind))?;
    let feats = transfer_features(cfg);
    let transfer = transfer_accuracy(&mut prober, &feats)?;
    let transfer_baseline = prober.baseline(&feats, Target::Static)?;
    Ok(ModelEval { dscore, transfer, transfer_baseline, transfer_rows: prober.held_out_rows(Target::Static) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(m: usize, sep: f64, seed: u64) -> (Vec<f64>, Vec<u32>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..m {
            let c = (i % 2) as u32;
            let off = if c == 0 { -sep } else { sep };
            for _ in 0..2 {
                let n: f64 = StandardNormal.sample(&mut r);
                x.push(off + 0.3 * n);
            }
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let (x, y) = blobs(200, 2.0, 1);
        let clf = train_linear_svm(&x, 2, &y, SvmParams::default(), 0).unwrap();
        assert_eq!(clf.accuracy(&x, &y), 1.0);
    }

    #[test]
    fn svm_is_deterministic_and_rejects_single_class() {
        let (x, y) = blobs(50, 1.0, 2);
        let a = train_linear_svm(&x, 2, &y, SvmParams::default(), 4).unwrap();
        assert_eq!(a, train_linear_svm(&x, 2, &y, SvmParams::default(), 4).unwrap());
        assert!(train_linear_svm(&x, 2, &vec![3; 50], SvmParams::default(), 4).is_err());
    }

    #[test]
    fn permuted_labels_give_chance_accuracy() {
        let (x, mut y) = blobs(1000, 2.0, 3);
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let (xtr, xte) = x.split_at(1600);
        let (ytr, yte) = y.split_at(800);
        let clf = train_linear_svm(xtr, 2, ytr, SvmParams::default(), 1).unwrap();
        let acc = clf.accuracy(xte, yte);
        let se = (0.25f64 / 200.0).sqrt();
        assert!((acc - 0.5).abs() <= 3.0 * se, "accuracy {acc}");
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(location_bucket([5.0, 5.0]).unwrap(), 0);
        assert_eq!(location_bucket([32.0, 32.0]).unwrap(), 4);
        assert_eq!(location_bucket([60.0, 10.0]).unwrap(), 6);
        assert_eq!(location_bucket([20.9, 43.0]).unwrap(), 2);
        assert!(location_bucket([64.0, 1.0]).is_err());
        assert!(location_bucket([-0.5, 1.0]).is_err());
    }

    #[test]
    fn order_examples() {
        assert!(temporal_order_label([1, 2, 3]).unwrap());
        assert!(temporal_order_label([3, 2, 1]).unwrap());
        assert!(!temporal_order_label([1, 3, 2]).unwrap());
        assert!(!temporal_order_label([2, 1, 3]).unwrap());
        assert!(temporal_order_label([1, 1, 3]).is_err());
    }

    #[test]
    fn score_arithmetic() {
        let s = score_from_accuracies([0.9, 0.15, 0.8, 0.12]).unwrap();
        assert!((s - (6.0f64 * (0.8 / 0.12)).sqrt()).abs() < 1e-12);
        assert!((s - 6.32).abs() < 0.01);
        assert_eq!(score_from_accuracies([0.9, 0.0, 0.8, 0.1]), None);
    }

    /// Videos whose first feature is the label plus noise and whose last two
    /// features are the position plus noise.
    fn synthetic(videos: usize, seed: u64) -> Encodings {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let frames = 8;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut positions = Vec::new();
        for v in 0..videos {
            let label = (v % 3) as u32;
            labels.push(label);
            for _ in 0..frames {
                let p = [r.random_range(0.0..64.0f32), r.random_range(0.0..64.0f32)];
                positions.push(p);
                let n: f64 = StandardNormal.sample(&mut r);
                values.push(label as f64 + 0.1 * n);
                values.push(p[0] as f64 / 64.0);
                values.push(p[1] as f64 / 64.0);
            }
        }
        Encodings { videos, frames, dim: 3, values, labels, positions }
    }

    #[test]
    fn natural_split_never_beats_max_over_splits() {
        let enc = synthetic(40, 1);
        let mut p = Prober::new(&enc, SvmParams { epochs: 30, ..Default::default() }, 2).unwrap();
        let nat = disentanglement_score(&mut p, SplitMode::Natural(1), Target::Location).unwrap();
        let max = disentanglement_score(&mut p, SplitMode::MaxOverSplits, Target::Location).unwrap();
        assert!(nat.score <= max.score);
        assert!(nat.score > 1.5, "{nat:?}");
        for a in max.accuracies {
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn score_is_invariant_to_feature_permutation() {
        let enc = synthetic(40, 5);
        let params = SvmParams { epochs: 30, ..Default::default() };
        let mut p = Prober::new(&enc, params, 3).unwrap();
        let a = disentanglement_score(&mut p, SplitMode::MaxOverSplits, Target::Location).unwrap();
        let perm = enc.select(&[2, 0, 1]);
        let mut q = Prober::new(&perm, params, 3).unwrap();
        let b = disentanglement_score(&mut q, SplitMode::MaxOverSplits, Target::Location).unwrap();
        assert!((a.score - b.score).abs() <= 1e-9, "{} vs {}", a.score, b.score);
    }

    #[test]
    fn triplet_table_is_balanced() {
        let enc = synthetic(10, 2);
        let t = feature_table(&enc, &[0, 1], Target::TemporalOrder, 4).unwrap();
        assert_eq!(t.dim, 6);
        assert_eq!(t.labels.len(), 10 * TRIPLETS_PER_VIDEO);
        assert_eq!(t.labels.iter().filter(|&&l| l == 1).count(), 5 * TRIPLETS_PER_VIDEO);
    }

    #[test]
    fn held_out_split_is_twenty_percent() {
        let t = held_out_videos(50, 1);
        assert_eq!(t.iter().filter(|&&b| b).count(), 10);
        assert_eq!(t, held_out_videos(50, 1));
    }
}
