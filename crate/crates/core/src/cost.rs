//! Symbolic parameter and FLOP counting.
//!
//! The walker follows each architecture from its [`NetConfig`] alone: no
//! tensors are allocated and no layer code runs. Counting convention, per
//! batch item:
//!
//! | layer              | FLOPs                                  |
//! |--------------------|----------------------------------------|
//! | conv               | `2 k^2 C_in C_out H' W'` (bias free)   |
//! | linear             | `2 in out` (bias free)                 |
//! | batch norm         | 2 per element (scale and shift)        |
//! | relu, add, scale   | 1 per element                          |
//! | sigmoid            | 4 per element                          |
//! | broadcast multiply | 1 per output element                   |
//! | 2x2 max pool       | 3 comparisons per output element       |
//! | global avg pool    | 1 per input element                    |
//! | bilinear 2x up     | 8 per output element (4 multiply-adds) |
//! | concat, slicing    | 0                                      |

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::arch::config::{NetConfig, Variant, NUM_PATCHES};
use crate::error::Result;
use crate::nn::blocks::DENSE_LAYERS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Linear,
    BatchNorm,
    Relu,
    Sigmoid,
    Mul,
    Add,
    Scale,
    MaxPool,
    AvgPool,
    Upsample,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Linear => "linear",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Mul => "mul",
            LayerKind::Add => "add",
            LayerKind::Scale => "scale",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
            LayerKind::Upsample => "upsample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostRow {
    pub name: String,
    pub kind: LayerKind,
    /// `[C, H, W]` for feature maps, `[features, 1, 1]` for linear outputs.
    pub output: [usize; 3],
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub variant: Variant,
    pub rows: Vec<CostRow>,
    pub total_params: u64,
    pub total_flops: u64,
}

impl CostReport {
    /// Parameter count of every row whose name starts with `prefix`.
    pub fn params_under(&self, prefix: &str) -> u64 {
        self.rows
            .iter()
            .filter(|r| r.name.starts_with(prefix))
            .map(|r| r.params)
            .sum()
    }

    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
        writeln!(
            f,
            "{:<width$}  {:<9}  {:>16}  {:>10}  {:>14}",
            "layer", "kind", "output", "params", "flops"
        )?;
        for r in &self.rows {
            let shape = format!("{}x{}x{}", r.output[0], r.output[1], r.output[2]);
            writeln!(
                f,
                "{:<width$}  {:<9}  {:>16}  {:>10}  {:>14}",
                r.name,
                r.kind.name(),
                shape,
                r.params,
                r.flops
            )?;
        }
        writeln!(
            f,
            "{:<width$}  {:<9}  {:>16}  {:>10}  {:>14}",
            "total", "", "", self.total_params, self.total_flops
        )?;
        write!(f, "{} GFLOPs per image", fmt_gflops(self.total_flops))
    }
}

fn fmt_gflops(flops: u64) -> String {
    format!("{:.3}", flops as f64 / 1e9)
}

/// A feature map shape during the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Map {
    c: usize,
    h: usize,
    w: usize,
}

impl Map {
    fn elems(self) -> u64 {
        (self.c * self.h * self.w) as u64
    }
    fn with_c(self, c: usize) -> Self {
        Map { c, ..self }
    }
}

struct Walker {
    rows: Vec<CostRow>,
}

impl Walker {
    fn push(&mut self, name: String, kind: LayerKind, out: Map, params: u64, flops: u64) {
        self.rows.push(CostRow {
            name,
            kind,
            output: [out.c, out.h, out.w],
            params,
            flops,
        });
    }

    fn conv(&mut self, name: &str, x: Map, cout: usize, k: usize, stride: usize, pad: usize) -> Map {
        let out = Map {
            c: cout,
            h: (x.h + 2 * pad - k) / stride + 1,
            w: (x.w + 2 * pad - k) / stride + 1,
        };
        let params = (cout * x.c * k * k + cout) as u64;
        let flops = 2 * (k * k * x.c * cout * out.h * out.w) as u64;
        self.push(name.into(), LayerKind::Conv, out, params, flops);
        out
    }

    fn bn(&mut self, name: &str, x: Map) -> Map {
        self.push(name.into(), LayerKind::BatchNorm, x, 2 * x.c as u64, 2 * x.elems());
        x
    }

    fn elementwise(&mut self, name: &str, kind: LayerKind, x: Map, per: u64) -> Map {
        self.push(name.into(), kind, x, 0, per * x.elems());
        x
    }

    fn maxpool(&mut self, name: &str, x: Map) -> Map {
        let out = Map {
            c: x.c,
            h: x.h / 2,
            w: x.w / 2,
        };
        self.push(name.into(), LayerKind::MaxPool, out, 0, 3 * out.elems());
        out
    }

    fn conv_block(&mut self, name: &str, x: Map, cout: usize) -> Map {
        let y = self.conv(&format!("{name}.conv1"), x, cout, 3, 1, 1);
        let y = self.conv(&format!("{name}.conv2"), y, cout, 3, 1, 1);
        let y = self.bn(&format!("{name}.bn"), y);
        self.elementwise(&format!("{name}.relu"), LayerKind::Relu, y, 1)
    }

    fn attention(&mut self, name: &str, x: Map) -> Map {
        let h = self.conv(&format!("{name}.conv1"), x, x.c / 2, 3, 1, 1);
        let h = self.elementwise(&format!("{name}.relu"), LayerKind::Relu, h, 1);
        let a = self.conv(&format!("{name}.conv2"), h, 1, 3, 1, 1);
        self.elementwise(&format!("{name}.sigmoid"), LayerKind::Sigmoid, a, 4);
        self.elementwise(&format!("{name}.gate"), LayerKind::Mul, x, 1)
    }

    fn head(&mut self, name: &str, x: Map, classes: usize) {
        let pooled = Map { c: x.c, h: 1, w: 1 };
        self.push(format!("{name}.pool"), LayerKind::AvgPool, pooled, 0, x.elems());
        let out = Map { c: classes, h: 1, w: 1 };
        self.push(
            format!("{name}.fc"),
            LayerKind::Linear,
            out,
            (x.c * classes + classes) as u64,
            2 * (x.c * classes) as u64,
        );
    }

    fn encoder(&mut self, name: &str, x: Map, widths: &[usize; 4]) -> Vec<Map> {
        let mut h = x;
        let mut out = Vec::new();
        for (i, &c) in widths.iter().enumerate() {
            let y = self.conv_block(&format!("{name}stage{}", i + 1), h, c);
            h = self.maxpool(&format!("{name}stage{}.pool", i + 1), y);
            out.push(h);
        }
        out
    }

    /// One dense layer of a fusion stream: its input carries
    /// `C + 2 i g` channels.
    fn dense_layer(&mut self, name: &str, x: Map, layer: usize, growth: usize) -> Map {
        let input = x.with_c(x.c + 2 * layer * growth);
        let y = self.conv(&format!("{name}.dense{layer}.conv"), input, growth, 3, 1, 1);
        let y = self.bn(&format!("{name}.dense{layer}.bn"), y);
        self.elementwise(&format!("{name}.dense{layer}.relu"), LayerKind::Relu, y, 1)
    }

    fn stream_output(&mut self, name: &str, x: Map, growth: usize, w_scale: bool) {
        let all = x.with_c(x.c + 2 * DENSE_LAYERS * growth);
        let y = self.conv(&format!("{name}.fuse"), all, x.c, 1, 1, 0);
        if w_scale {
            self.elementwise(&format!("{name}.scale"), LayerKind::Scale, y, 1);
        }
        self.elementwise(&format!("{name}.residual"), LayerKind::Add, y, 1);
    }

    fn dpdfe(&mut self, name: &str, x: Map, growth: usize) {
        let (a, b) = (format!("{name}.stream_a"), format!("{name}.stream_b"));
        for i in 0..DENSE_LAYERS {
            self.dense_layer(&a, x, i, growth);
            self.dense_layer(&b, x, i, growth);
        }
        self.stream_output(&a, x, growth, true);
        self.stream_output(&b, x, growth, true);
    }

    fn dsdf(&mut self, name: &str, lo: Map, hi: Map, growth: usize) {
        let (a, b) = (format!("{name}.stream_lo"), format!("{name}.stream_hi"));
        for i in 0..DENSE_LAYERS {
            let f_lo = self.dense_layer(&a, lo, i, growth);
            let f_hi = self.dense_layer(&b, hi, i, growth);
            self.push(
                format!("{name}.up{i}"),
                LayerKind::Upsample,
                Map {
                    c: growth,
                    h: 2 * f_hi.h,
                    w: 2 * f_hi.w,
                },
                0,
                8 * (growth * 4 * f_hi.h * f_hi.w) as u64,
            );
            self.conv(&format!("{name}.down{i}"), f_lo, growth, 3, 2, 1);
        }
        self.stream_output(&a, lo, growth, true);
        self.stream_output(&b, hi, growth, true);
    }
}

/// Walks the architecture described by `cfg` (batch size 1).
pub fn analyze(cfg: &NetConfig) -> Result<CostReport> {
    cfg.validate()?;
    let mut wk = Walker { rows: Vec::new() };
    let input = Map {
        c: 1,
        h: cfg.input_height,
        w: cfg.input_width,
    };
    let widths = cfg.channel_widths;
    match cfg.variant {
        Variant::SaNet => {
            let mut h = input;
            for (i, &c) in widths.iter().enumerate() {
                let st = format!("stage{}", i + 1);
                let y = wk.conv_block(&format!("{st}.conv_block"), h, c);
                let y = wk.attention(&format!("{st}.attention"), y);
                h = wk.maxpool(&format!("{st}.pool"), y);
            }
            wk.head("head", h, cfg.num_writers);
        }
        Variant::Msrf => {
            let scales = wk.encoder("encoder.", input, &widths);
            for column in ["fusion1", "fusion2"] {
                for i in 0..3 {
                    wk.dsdf(
                        &format!("{column}.dsdf{}{}", i + 1, i + 2),
                        scales[i],
                        scales[i + 1],
                        cfg.growth,
                    );
                }
            }
            for i in 0..3 {
                wk.head(&format!("heads.{i}"), scales[3], cfg.num_writers);
            }
        }
        Variant::PatchNet => {
            let pw = cfg.patch_widths();
            let side = cfg.patch_size();
            let mut maps = [Map { c: 1, h: side, w: side }; NUM_PATCHES];
            for (si, &c) in pw.iter().enumerate() {
                for (p, m) in maps.iter_mut().enumerate() {
                    *m = wk.conv_block(&format!("patch{p}.stage{}", si + 1), *m, c);
                }
                for (j, &m) in maps[..NUM_PATCHES - 1].iter().enumerate() {
                    wk.dpdfe(&format!("exchange.stage{}.pair{}{}", si + 1, j, j + 1), m, cfg.growth);
                }
                for (p, m) in maps.iter_mut().enumerate() {
                    *m = wk.maxpool(&format!("patch{p}.stage{}.pool", si + 1), *m);
                }
            }
            for (p, m) in maps.iter().enumerate() {
                wk.head(&format!("patch{p}.head"), *m, cfg.num_writers);
            }
            let g = wk.encoder("global.", input, &widths);
            wk.head("global_head", g[3], cfg.num_writers);
        }
    }
    let total_params = wk.rows.iter().map(|r| r.params).sum();
    let total_flops = wk.rows.iter().map(|r| r.flops).sum();
    Ok(CostReport {
        variant: cfg.variant,
        rows: wk.rows,
        total_params,
        total_flops,
    })
}

/// FLOP figures quoted for the published networks, in GFLOPs. The source
/// lists four method names against three numbers, so the mapping of names to
/// numbers is not certain; SA-Net and PatchNet are read as 4.10 and 7.65.
pub fn reference_gflops(variant: Variant) -> Option<f64> {
    match variant {
        Variant::SaNet => Some(4.10),
        Variant::PatchNet => Some(7.65),
        Variant::Msrf => Some(5.5),
    }
}
