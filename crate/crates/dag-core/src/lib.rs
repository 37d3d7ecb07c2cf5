//! Grounding per-point affordance heatmaps on 3D point clouds from a
//! human-object-interaction image and an affordance phrase.
//!
//! The pipeline: a frozen conditional denoiser backbone yields a multi-scale
//! feature pyramid from the (noised) image in a single forward pass; a
//! learned aggregator mixes the levels; an affordance block fuses the result
//! with text embeddings; a point encoder with hierarchical propagation yields
//! per-point features and a global token; a multi-source decoder fuses all of
//! it into one affordance value per point. Training minimizes BCE + Dice
//! against per-point labels.

pub mod error;
pub mod exec;
pub mod optim;
pub mod params;
pub mod tensor;

pub use error::{DagError, Result};
