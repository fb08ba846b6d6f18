//! Desk-scale two-stage pipeline: contrastive alignment of a video encoder
//! against a frozen EEG encoder, then injection of the frozen alignment
//! features into a minimal end-to-end trajectory planner, with synthetic
//! data generation, preprocessing, evaluation, and ablation harnesses.

pub mod align;
pub mod error;
pub mod fdcheck;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod signal;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
