//! Segment-level curation of mixed-quality robot demonstrations.
//!
//! The pipeline splits demonstrations at keyframes ([`segmentation`]),
//! renders each segment's end-effector path to a raster ([`render`]), embeds
//! raster pairs with a contrastively trained encoder ([`repr`]), labels
//! segments by distance-weighted voting against an expert reference set
//! ([`select`]) and repairs low-quality segments with greedy waypoint
//! selection plus action relabeling ([`optimize`]). [`pipeline`] wires the
//! stages together; [`synth`] generates labeled test data.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod optimize;
pub mod pipeline;
pub mod render;
pub mod repr;
pub mod rng;
pub mod segmentation;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
