//! File formats, synthetic data, the benchmark and pipeline harness, and the
//! `reid` command-line tool built on [`reid_core`].

pub mod alloc_meter;
pub mod bench;
pub mod cli;
mod error;
pub mod formats;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use reid_core;
