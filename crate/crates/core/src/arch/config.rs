use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::blocks::DEFAULT_RESIDUAL_SCALE;

/// Which of the three networks to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// VGG-style encoder with a spatial attention unit after every block.
    SaNet,
    /// Encoder plus dual-scale dense fusion funnelling into the deepest scale,
    /// with three classification heads.
    Msrf,
    /// Five overlapping patch streams with dual-patch exchange plus a global
    /// pathway; six heads.
    PatchNet,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SaNet, Variant::Msrf, Variant::PatchNet];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SaNet => "sa-net",
            Variant::Msrf => "msrf",
            Variant::PatchNet => "patchnet",
        }
    }

    /// Dense growth rate used when none is given. The patch network uses a
    /// smaller growth because its fusion blocks run at full patch
    /// resolution in every stage.
    pub fn default_growth(self) -> usize {
        match self {
            Variant::SaNet | Variant::Msrf => 32,
            Variant::PatchNet => 12,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sa-net" | "sanet" | "sa" => Ok(Variant::SaNet),
            "msrf" | "msrf-net" | "msrf-classification" => Ok(Variant::Msrf),
            "patchnet" | "patch-net" | "patch" => Ok(Variant::PatchNet),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected sa-net, msrf or patchnet)"
            ))),
        }
    }
}

pub const DEFAULT_WIDTHS: [usize; 4] = [64, 128, 256, 512];
pub const INPUT_HEIGHT: usize = 64;
pub const INPUT_WIDTH: usize = 128;
/// Patches cut from each word image.
pub const NUM_PATCHES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub variant: Variant,
    pub num_writers: usize,
    pub channel_widths: [usize; 4],
    pub input_height: usize,
    pub input_width: usize,
    pub growth: usize,
    pub residual_scale: f64,
}

impl NetConfig {
    pub fn new(variant: Variant, num_writers: usize) -> Self {
        Self {
            variant,
            num_writers,
            channel_widths: DEFAULT_WIDTHS,
            input_height: INPUT_HEIGHT,
            input_width: INPUT_WIDTH,
            growth: variant.default_growth(),
            residual_scale: DEFAULT_RESIDUAL_SCALE,
        }
    }

    /// Every width and the growth rate divided by four (rounded up).
    pub fn quarter(mut self) -> Self {
        self.channel_widths = self.channel_widths.map(|w| w.div_ceil(4));
        self.growth = self.growth.div_ceil(4);
        self
    }

    /// Scaled-down configuration for gradient checks: widths `[4, 8, 12, 16]`,
    /// 16x32 input, growth 2.
    pub fn tiny(variant: Variant, num_writers: usize) -> Self {
        Self {
            variant,
            num_writers,
            channel_widths: [4, 8, 12, 16],
            input_height: 16,
            input_width: 32,
            growth: 2,
            residual_scale: DEFAULT_RESIDUAL_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_writers == 0 {
            return fail("num_writers must be positive".into());
        }
        if self.channel_widths.contains(&0) {
            return fail(format!("channel widths must be positive: {:?}", self.channel_widths));
        }
        let (h, w) = (self.input_height, self.input_width);
        if h == 0 || h % 16 != 0 || w % 16 != 0 {
            return fail(format!("input {h}x{w} must be a positive multiple of 16 in both dims"));
        }
        if self.variant == Variant::SaNet && self.channel_widths.iter().any(|c| c % 2 != 0) {
            return fail(format!(
                "spatial attention needs even widths, got {:?}",
                self.channel_widths
            ));
        }
        if self.variant == Variant::PatchNet && (w < h || (w - h) % (NUM_PATCHES - 1) != 0) {
            return fail(format!(
                "input width {w} cannot hold {NUM_PATCHES} evenly spaced {h}x{h} patches"
            ));
        }
        if self.variant != Variant::SaNet && self.growth == 0 {
            return fail("dense growth must be positive".into());
        }
        if !(self.residual_scale.is_finite()) {
            return fail("residual scale must be finite".into());
        }
        Ok(())
    }

    /// Channel widths of each patch stream: a quarter of the global widths.
    pub fn patch_widths(&self) -> [usize; 4] {
        self.channel_widths.map(|w| w.div_ceil(4))
    }

    /// Side of the square patches.
    pub fn patch_size(&self) -> usize {
        self.input_height
    }

    /// Left column of each patch: uniform stride covering the full width.
    pub fn patch_offsets(&self) -> [usize; NUM_PATCHES] {
        let stride = (self.input_width - self.patch_size()) / (NUM_PATCHES - 1);
        core::array::from_fn(|i| i * stride)
    }

    /// Number of classification heads the network emits.
    pub fn num_heads(&self) -> usize {
        match self.variant {
            Variant::SaNet => 1,
            Variant::Msrf => 3,
            Variant::PatchNet => NUM_PATCHES + 1,
        }
    }

    /// Canonical one-line description used for hashing and checkpoint
    /// manifests.
    pub fn canonical(&self) -> String {
        format!(
            "variant={};writers={};widths={},{},{},{};input={}x{};growth={};residual_scale={:?}",
            self.variant,
            self.num_writers,
            self.channel_widths[0],
            self.channel_widths[1],
            self.channel_widths[2],
            self.channel_widths[3],
            self.input_height,
            self.input_width,
            self.growth,
            self.residual_scale
        )
    }
}
