//! Dataset handling, training, evaluation and the command line for the
//! writer identification networks in `penprint-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod image_io;
pub mod manifest;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
