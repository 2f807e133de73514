//! Slice-level forward and backward kernels used by the autodiff graph.

pub mod conv;
pub mod norm;
pub mod pool;
pub mod resample;
