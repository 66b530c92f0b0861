//! Semi-supervised stereo inverse-depth estimation as differentiable field
//! operations.
//!
//! The crate implements a multi-scale stereo objective — photometric
//! reconstruction, left-right consistency, sparse supervised inverse depth,
//! and edge-aware smoothness — together with hand-derived gradients, a
//! direct Adam optimizer over per-pixel inverse-depth fields, a LiDAR
//! projection/occlusion-filtering pipeline, synthetic rectified-stereo scene
//! generation, and standard depth evaluation metrics.

pub mod diff;
pub mod error;
pub mod eval;
pub mod field;
pub mod io;
pub mod lidar;
pub mod losses;
pub mod photometric;
pub mod sampler;
pub mod synth;
pub mod varopt;

pub use error::{Error, Result};
