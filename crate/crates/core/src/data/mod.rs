//! Video datasets: MNIST IDX ingestion, procedural digit sprites, the
//! bouncing-digits and rotating-shapes generators, and the shard format.

pub mod bouncing;
pub mod glyphs;
pub mod idx;
pub mod shapes;
pub mod shard;

use crate::error::{Error, Result};
use crate::nn::FRAME;

pub use bouncing::{gen_bouncing_mnist, BounceConfig};
pub use idx::{parse_idx, serialize_idx, IdxData};
pub use shapes::{gen_rotating_shapes, ShapeConfig, ShapeSplit};
pub use shard::{read_shard, read_shards, write_shard, write_shards};

/// A batch of grayscale videos with per-video and per-frame annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoBatch {
    pub batch: usize,
    pub n_frames: usize,
    /// `[batch, n_frames, 64, 64]`, values in `[0, 1]`.
    pub frames: Vec<f32>,
    /// Static label per video (digit class or shape id).
    pub labels: Vec<u32>,
    /// Object centroid `(row, col)` per frame, `[batch * n_frames]`.
    pub positions: Vec<[f32; 2]>,
    /// Orientation per frame in radians; empty for datasets without rotation.
    pub angles: Vec<f32>,
}

impl VideoBatch {
    pub const PIXELS: usize = FRAME * FRAME;

    pub fn frame(&self, video: usize, frame: usize) -> &[f32] {
        let k = video * self.n_frames + frame;
        &self.frames[k * Self::PIXELS..(k + 1) * Self::PIXELS]
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.batch * self.n_frames;
        if self.frames.len() != count * Self::PIXELS
            || self.labels.len() != self.batch
            || self.positions.len() != count
            || !(self.angles.is_empty() || self.angles.len() == count)
        {
            return Err(Error::Shape(format!("inconsistent video batch [{}, {}]", self.batch, self.n_frames)));
        }
        if self.frames.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("pixel outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Concatenate batches with equal frame counts.
    pub fn concat(parts: &[VideoBatch]) -> Result<VideoBatch> {
        let first = parts.first().ok_or_else(|| Error::Invalid("no batches to concatenate".into()))?;
        let mut out = VideoBatch {
            batch: 0,
            n_frames: first.n_frames,
            frames: Vec::new(),
            labels: Vec::new(),
            positions: Vec::new(),
            angles: Vec::new(),
        };
        for p in parts {
            if p.n_frames != out.n_frames || p.angles.is_empty() != first.angles.is_empty() {
                return Err(Error::Shape("batches differ in frame count or annotations".into()));
            }
            out.batch += p.batch;
            out.frames.extend_from_slice(&p.frames);
            out.labels.extend_from_slice(&p.labels);
            out.positions.extend_from_slice(&p.positions);
            out.angles.extend_from_slice(&p.angles);
        }
        Ok(out)
    }
}

/// Square grayscale sprites with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpriteBank {
    pub size: usize,
    pub images: Vec<Vec<f32>>,
    pub labels: Vec<u8>,
}

impl SpriteBank {
    /// Build from parsed IDX image and label files.
    pub fn from_idx(images: &IdxData, labels: &IdxData) -> Result<Self> {
        if !images.is_images() || labels.is_images() {
            return Err(Error::Invalid("expected an image file and a label file".into()));
        }
        let (n, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
        if rows != cols {
            return Err(Error::Shape(format!("sprites must be square, got {rows}x{cols}")));
        }
        if labels.dims[0] != n {
            return Err(Error::Shape(format!("{n} images but {} labels", labels.dims[0])));
        }
        let px = images.to_unit_f32();
        Ok(SpriteBank {
            size: rows,
            images: px.chunks(rows * cols).map(|c| c.to_vec()).collect(),
            labels: labels.data.clone(),
        })
    }

    pub fn indices_of(&self, class: u8) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

/// An endless, seekable stream of training batches: content depends only on
/// the iteration index and the source's own seed.
pub trait VideoSource {
    fn batch(&self, iteration: u64, batch: usize) -> Result<VideoBatch>;
    fn n_frames(&self) -> usize;
}

/// Bouncing digits drawn from a sprite bank.
pub struct BouncingSource {
    pub cfg: BounceConfig,
    pub sprites: SpriteBank,
    pub seed: u64,
}

impl VideoSource for BouncingSource {
    fn batch(&self, iteration: u64, batch: usize) -> Result<VideoBatch> {
        gen_bouncing_mnist(&self.cfg, &self.sprites, batch, crate::rng::derive_seed(self.seed, &[iteration]))
    }

    fn n_frames(&self) -> usize {
        self.cfg.n_frames
    }
}

/// Rotating shapes from the training pool.
pub struct ShapeSource {
    pub cfg: ShapeConfig,
    pub seed: u64,
}

impl VideoSource for ShapeSource {
    fn batch(&self, iteration: u64, batch: usize) -> Result<VideoBatch> {
        gen_rotating_shapes(&self.cfg, ShapeSplit::Train, batch, crate::rng::derive_seed(self.seed, &[iteration]))
    }

    fn n_frames(&self) -> usize {
        self.cfg.n_frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Bouncing,
    Shapes,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bouncing" => Ok(DatasetKind::Bouncing),
            "shapes" => Ok(DatasetKind::Shapes),
            _ => Err(Error::Config(format!("unknown dataset {s:?} (expected bouncing or shapes)"))),
        }
    }
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Bouncing => "bouncing",
            DatasetKind::Shapes => "shapes",
        }
    }
}

/// Everything needed to rebuild the training stream and evaluation sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub digit_classes: Vec<u8>,
    /// Procedural sprites per digit class and split (ignored with IDX input).
    pub sprites_per_class: usize,
    pub speed: f64,
    pub omega: f64,
    pub train_shapes: u32,
    pub held_out_shapes: u32,
    pub mnist_images: Option<std::path::PathBuf>,
    pub mnist_labels: Option<std::path::PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DatasetKind::Bouncing,
            digit_classes: (0..10).collect(),
            sprites_per_class: 200,
            speed: 3.0,
            omega: std::f64::consts::TAU / 24.0,
            train_shapes: 40,
            held_out_shapes: 10,
            mnist_images: None,
            mnist_labels: None,
        }
    }
}

/// Which sprites or shapes a stream draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl DataConfig {
    pub fn bounce_config(&self, n_frames: usize) -> BounceConfig {
        BounceConfig { speed: self.speed, n_frames, digit_classes: self.digit_classes.clone(), ..Default::default() }
    }

    pub fn shape_config(&self, n_frames: usize) -> ShapeConfig {
        ShapeConfig {
            omega: self.omega,
            n_frames,
            train_ids: (0..self.train_shapes).collect(),
            held_out_ids: (1000..1000 + self.held_out_shapes).collect(),
            library_seed: 0,
        }
    }

    /// Sprites for one split. IDX input is divided 80/20 by index; procedural
    /// glyphs use disjoint seed streams per split.
    pub fn sprites(&self, split: Split, seed: u64) -> Result<SpriteBank> {
        match (&self.mnist_images, &self.mnist_labels) {
            (Some(img), Some(lab)) => {
                let images = parse_idx(&std::fs::read(img)?)?;
                let labels = parse_idx(&std::fs::read(lab)?)?;
                let bank = SpriteBank::from_idx(&images, &labels)?;
                let cut = bank.labels.len() * 4 / 5;
                let range = match split {
                    Split::Train => 0..cut,
                    Split::Eval => cut..bank.labels.len(),
                };
                let keep: Vec<usize> = range.filter(|&i| self.digit_classes.contains(&bank.labels[i])).collect();
                Ok(SpriteBank {
                    size: bank.size,
                    images: keep.iter().map(|&i| bank.images[i].clone()).collect(),
                    labels: keep.iter().map(|&i| bank.labels[i]).collect(),
                })
            }
            (None, None) => {
                let k = match split {
                    Split::Train => 0,
                    Split::Eval => 1,
                };
                Ok(glyphs::glyph_bank(&self.digit_classes, self.sprites_per_class, crate::rng::derive_seed(seed, &[k])))
            }
            _ => Err(Error::Config("mnist_images and mnist_labels must be given together".into())),
        }
    }

    /// The endless training stream.
    pub fn train_source(&self, n_frames: usize, seed: u64) -> Result<Box<dyn VideoSource + Send + Sync>> {
        use crate::rng::{derive_seed, tag};
        let batch_seed = derive_seed(seed, &[tag::BATCH]);
        Ok(match self.kind {
            DatasetKind::Bouncing => {
                let sprites = self.sprites(Split::Train, derive_seed(seed, &[tag::GLYPH]))?;
                let cfg = self.bounce_config(n_frames);
                cfg.validate(&sprites)?;
                Box::new(BouncingSource { cfg, sprites, seed: batch_seed })
            }
            DatasetKind::Shapes => {
                let cfg = self.shape_config(n_frames);
                cfg.validate()?;
                Box::new(ShapeSource { cfg, seed: batch_seed })
            }
        })
    }

    /// A fixed evaluation set of `videos` videos drawn from held-out sprites
    /// or held-out shape ids.
    pub fn eval_set(&self, n_frames: usize, videos: usize, seed: u64) -> Result<VideoBatch> {
        use crate::rng::{derive_seed, tag};
        match self.kind {
            DatasetKind::Bouncing => {
                let sprites = self.sprites(Split::Eval, derive_seed(seed, &[tag::GLYPH]))?;
                gen_bouncing_mnist(&self.bounce_config(n_frames), &sprites, videos, derive_seed(seed, &[tag::SPLIT]))
            }
            DatasetKind::Shapes => gen_rotating_shapes(
                &self.shape_config(n_frames),
                ShapeSplit::HeldOut,
                videos,
                derive_seed(seed, &[tag::SPLIT]),
            ),
        }
    }
}
