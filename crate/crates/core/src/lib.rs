//! Multimodal late-fusion emotion recognition over precomputed movie features.
//!
//! The crate is organised along the data flow of an experiment:
//!
//! - [`features`]: the binary feature container, dataset manifest and
//!   frame pooling.
//! - [`labels`]: continuous annotation tracks to per-segment 7-class labels
//!   (Savitzky-Golay smoothing, rescaling, window means, quantization).
//! - [`nn`]: a small dense-network kernel with temperature softmax,
//!   cross-entropy and SGD with weight decay.
//! - [`fusion`]: per-modality projections, concatenation and a two-layer
//!   fusion trunk.
//! - [`training`]: mini-batching, validation split and early stopping.
//! - [`eval`]: metrics, leave-one-movie-out evaluation and ablation reports.
//! - [`cli`]: the `affuse` command-line front end.
//! - [`synth`]: generator for Gaussian-cluster fixture datasets.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod labels;
pub mod nn;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
