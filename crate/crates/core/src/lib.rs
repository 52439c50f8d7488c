//! Block-motion feature propagation and interpolation for per-frame dense
//! prediction on video.
//!
//! Keyframes run the (expensive) feature extractor; intermediate frames
//! reuse keyframe features by warping them along block motion vectors,
//! either forward from the previous keyframe only ([`pipeline::Scheme::Prop`])
//! or from both enclosing keyframes followed by a weighted fusion
//! ([`pipeline::Scheme::Interp`]).

pub mod block_motion;
pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod frame_io;
pub mod fusion;
mod linalg;
pub mod parallel;
pub mod pipeline;
pub mod warp;

pub use error::{Error, Result};
