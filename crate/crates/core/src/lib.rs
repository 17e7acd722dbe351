//! Configural-effect probing of feed-forward vision models.
//!
//! The crate generates Gestalt stimulus pairs (line-drawing sets and dot
//! patterns), reads layer activations out of ONNX models, turns them into
//! cosine similarities and configural effects, and compares those effects
//! with human reaction-time data. A small convolutional network trained
//! from scratch checks that the dot-pattern features are learnable at all.

pub mod canvas;
pub mod dots;
pub mod error;
pub mod experiment;
pub mod learn;
pub mod metrics;
pub mod model;
pub mod pomerantz;
pub mod rng;
pub mod stats;
pub mod stimulus;
pub mod transform;

pub use error::{Error, Result};
