//! Factored sequence VAE: a video auto-encoder whose per-frame latents split
//! into a static (identity) factor and a temporally varying (pose) factor.

pub mod cli;
pub mod data;
pub mod elbo;
pub mod error;
pub mod eval;
pub mod kv;
pub mod nn;
pub mod prior;
pub mod real;
pub mod rng;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
