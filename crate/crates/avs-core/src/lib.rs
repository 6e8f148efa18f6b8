//! Audio-visual metric depth estimation pipeline.
//!
//! Two stages: a supervised audio-visual network predicts pseudo-dense metric
//! depth from RGB plus binaural echo spectrograms, and a self-supervised
//! relative depth model is scale-corrected with median factors extracted from
//! stage one. Everything runs on CPU with hand-derived gradients so every
//! learned operation can be verified against finite differences.

pub mod avsnet;
pub mod checkpoint;
pub mod dataio;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod rng;
pub mod scaling;
pub mod selfsup;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
