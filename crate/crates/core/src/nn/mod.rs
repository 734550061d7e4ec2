//! Network layers, the encoder/decoder model, and checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod model;

pub use layers::{Act, Mode};
pub use model::{reparam_sample, LatentSample, Model, NetConfig, Preset, FRAME};
