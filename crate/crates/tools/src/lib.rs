//! File formats, checkpoints, configuration and the command-line front end
//! for the `artist-core` tracker.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod motfile;
pub mod sequence;

pub use error::{Result, ToolError};
