//! Probabilistic tracklet scoring and inpainting for online multi-object tracking.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic
//! piece of the tracker: box geometry, velocity codebooks, the recurrent
//! motion model with hand-written backpropagation, training, likelihood
//! scoring and inpainting, linear assignment, the online tracking loop and
//! CLEAR-MOT / identity metrics. File formats and the command-line tool
//! live in the `artist-tools` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod assignment;
pub mod codebook;
pub mod error;
pub mod geometry;
mod math;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod tracker;
pub mod tracklet;
pub mod training;

pub use codebook::{ClassIndex4, Codebook};
pub use error::{Error, Result};
pub use geometry::{BoundingBox, Detection, FrameDims, Velocity};
pub use nn::{CellState, InteractionRep, ModelConfig, MotionModel, StepDistribution};
pub use tracklet::{BoxOrigin, TrackRow, Tracklet, TrackletStatus};
