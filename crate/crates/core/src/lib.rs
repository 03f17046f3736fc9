//! Sliding-window camera-path smoothing for minimum-latency online video
//! stabilization.
//!
//! The pipeline consumes per-frame motion fields on a coarse grid, keeps the
//! most recent `r - 1` of them, and predicts a stabilizing warp for the newest
//! frame only. Training data is synthesized by motion transfer so that exact
//! ground-truth warps are known.

pub mod adam;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod eval;
pub mod image;
pub mod loss;
pub mod motion;
pub mod mseq;
pub mod net;
pub mod scalar;
pub mod synth;
pub mod train;
pub mod warp;

pub use error::{Error, Result};
pub use motion::{GridGeometry, MotionField, MotionWindow};
