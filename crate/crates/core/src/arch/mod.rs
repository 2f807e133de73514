//! The three writer-identification networks.

pub mod config;
pub mod model;
pub mod networks;

pub use config::{NetConfig, Variant, DEFAULT_WIDTHS, INPUT_HEIGHT, INPUT_WIDTH, NUM_PATCHES};
pub use model::{summed_cross_entropy, BatchOutcome, Model};
pub use networks::{Encoder, MsrfNet, MsrfTrace, Network, PatchNet, PatchNetTrace, SaNet, SaNetTrace};
