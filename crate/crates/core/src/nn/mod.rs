//! Parameters, layers and the composite blocks the three networks are built from.

pub mod blocks;
pub mod init;
pub mod layers;
pub mod params;
pub mod session;

pub use blocks::{ClassHead, ConvBlock, DenseStream, DpdfeBlock, DsdfBlock, SpatialAttention, DENSE_LAYERS};
pub use init::Init;
pub use layers::{BatchNorm2d, Conv2d, Linear};
pub use params::{ParamEntry, ParamId, ParamKind, ParamStore};
pub use session::{Mode, Session};
