//! Tensor/autodiff core and network definitions for text-independent writer
//! identification from word images.
//!
//! The crate is `no_std` (with `alloc`). File formats, dataset handling and
//! the command-line front end live in the `penprint` crate.
#![no_std]

extern crate alloc;

pub mod arch;
pub mod cost;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod predict;
pub mod preprocess;
pub mod scalar;
pub mod tensor;

pub use arch::{Model, NetConfig, Variant};
pub use cost::{analyze, CostReport};
pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use metrics::{EvalReport, Level};
pub use nn::{Mode, ParamStore, Session};
pub use optim::{Adam, TrainConfig};
pub use predict::WordPrediction;
pub use scalar::Real;
pub use tensor::Tensor;
