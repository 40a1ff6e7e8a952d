//! Training-free image manipulation scoring from two signals: how far a
//! sample's self-attention pattern departs from a reference built on
//! authentic images, and how inconsistent each patch embedding is with its
//! spatial neighbours. The two are fused into one hybrid anomaly score.
//!
//! Numeric code is generic over [`Real`] (`f32`/`f64`); counting metrics are
//! generic over [`Quantity`], which also admits exact rationals. The aliases
//! below fix the common instantiations.

pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod fx;
pub mod grid;
pub mod image;
pub mod losses;
pub mod manifest;
pub mod oracle;
pub mod pipeline;
pub mod px;
pub mod render;
pub mod rng;
pub mod scalar;
pub mod selfcheck;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{Quantity, Real};

/// Metrics with exact rational arithmetic.
pub type ExactMetrics = eval::Metrics<num_rational::Ratio<i64>>;
pub type Metrics64 = eval::Metrics<f64>;
pub type Metrics32 = eval::Metrics<f32>;
pub type ReferenceStats64 = fx::ReferenceStats<f64>;
pub type ReferenceStats32 = fx::ReferenceStats<f32>;
pub type AttentionMap64 = fx::AttentionMap<f64>;
pub type AttentionMap32 = fx::AttentionMap<f32>;
pub type LocalResult64 = px::LocalResult<f64>;
pub type LocalResult32 = px::LocalResult<f32>;
pub type EmbeddingGrid64 = px::EmbeddingGrid<f64>;
pub type EmbeddingGrid32 = px::EmbeddingGrid<f32>;
pub type Field64 = grid::Grid<f64>;
pub type Mask = grid::Grid<u8>;
