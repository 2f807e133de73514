use alloc::format;
use alloc::vec::Vec;

use crate::arch::config::{NetConfig, Variant, NUM_PATCHES};
use crate::error::{dim_err, Result};
use crate::graph::Var;
use crate::nn::blocks::{ClassHead, ConvBlock, DpdfeBlock, DsdfBlock, SpatialAttention};
use crate::nn::init::Init;
use crate::nn::params::ParamStore;
use crate::nn::session::Session;
use crate::scalar::Real;

fn check_input<T: Real>(s: &Session<'_, T>, cfg: &NetConfig, x: Var) -> Result<()> {
    let [_, c, h, w] = s.value(x).dims4("network input")?;
    if c != 1 || h != cfg.input_height || w != cfg.input_width {
        return dim_err(
            "network input",
            format!(
                "expected [N,1,{},{}], got {:?}",
                cfg.input_height,
                cfg.input_width,
                s.value(x).shape()
            ),
        );
    }
    Ok(())
}

/// Stage outputs and attention maps of an SA-Net pass.
#[derive(Debug, Clone)]
pub struct SaNetTrace {
    /// Pooled output of each stage.
    pub stages: Vec<Var>,
    /// Attention map of each stage, `[N, 1, H, W]`.
    pub attention: Vec<Var>,
    pub logits: Var,
}

/// Four stages of conv block, spatial attention and 2x2 max pooling,
/// followed by one classification head.
#[derive(Debug, Clone)]
pub struct SaNet {
    pub blocks: Vec<ConvBlock>,
    pub attention: Vec<SpatialAttention>,
    pub head: ClassHead,
}

impl SaNet {
    pub fn new<T: Real>(init: &mut Init<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut attention = Vec::new();
        let mut cin = 1;
        for (i, &c) in cfg.channel_widths.iter().enumerate() {
            let mut st = init.scope(&format!("stage{}", i + 1));
            blocks.push(ConvBlock::new(&mut st, "conv_block", cin, c)?);
            attention.push(SpatialAttention::new(&mut st, "attention", c)?);
            cin = c;
        }
        let head = ClassHead::new(init, "head", cin, cfg.num_writers)?;
        Ok(Self {
            blocks,
            attention,
            head,
        })
    }

    pub fn trace<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<SaNetTrace> {
        let mut stages = Vec::new();
        let mut maps = Vec::new();
        let mut h = x;
        for (block, att) in self.blocks.iter().zip(&self.attention) {
            let conv = block.forward(s, h)?;
            let (gated, a) = att.forward(s, conv)?;
            h = s.graph.maxpool2d(gated, 2, 2)?;
            stages.push(h);
            maps.push(a);
        }
        let logits = self.head.forward(s, h)?;
        Ok(SaNetTrace {
            stages,
            attention: maps,
            logits,
        })
    }
}

/// Plain stack of conv block + 2x2 max pooling stages.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub blocks: Vec<ConvBlock>,
}

impl Encoder {
    pub fn new<T: Real>(init: &mut Init<'_, T>, name: &str, input_channels: usize, widths: &[usize]) -> Result<Self> {
        let mut s = init.scope(name);
        let mut cin = input_channels;
        let mut blocks = Vec::new();
        for (i, &c) in widths.iter().enumerate() {
            blocks.push(ConvBlock::new(&mut s, &format!("stage{}", i + 1), cin, c)?);
            cin = c;
        }
        Ok(Self { blocks })
    }

    /// Pooled output of every stage.
    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut h = x;
        for b in &self.blocks {
            let y = b.forward(s, h)?;
            h = s.graph.maxpool2d(y, 2, 2)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Intermediate features of an MSRF pass.
#[derive(Debug, Clone)]
pub struct MsrfTrace {
    /// Plain encoder scales S1..S4.
    pub scales: Vec<Var>,
    /// Deepest-scale features seen by the three heads: before the first
    /// last-level fusion block, between the two, and after the second.
    pub deepest: Vec<Var>,
    pub logits: Vec<Var>,
}

/// Multi-scale fusion classifier.
///
/// The encoder yields scales S1..S4. A first column of dual-scale fusion
/// blocks runs top-down over (S1,S2), (S2,S3), (S3,S4); a second column
/// repeats the sweep, keeping only the coarse output so that every scale
/// funnels into S4. The two blocks touching S4 are the last-level blocks, and
/// a head sits before, between and after them.
#[derive(Debug, Clone)]
pub struct MsrfNet {
    pub encoder: Encoder,
    pub first_column: Vec<DsdfBlock>,
    pub second_column: Vec<DsdfBlock>,
    pub heads: Vec<ClassHead>,
}

impl MsrfNet {
    pub fn new<T: Real>(init: &mut Init<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let w = cfg.channel_widths;
        let encoder = Encoder::new(init, "encoder", 1, &w)?;
        let mut column = |name: &str| -> Result<Vec<DsdfBlock>> {
            let mut s = init.scope(name);
            (0..3)
                .map(|i| {
                    DsdfBlock::new(
                        &mut s,
                        &format!("dsdf{}{}", i + 1, i + 2),
                        w[i],
                        w[i + 1],
                        cfg.growth,
                        cfg.residual_scale,
                    )
                })
                .collect()
        };
        let first_column = column("fusion1")?;
        let second_column = column("fusion2")?;
        let mut hs = init.scope("heads");
        let heads = (0..3)
            .map(|i| ClassHead::new(&mut hs, &format!("{i}"), w[3], cfg.num_writers))
            .collect::<Result<_>>()?;
        Ok(Self {
            encoder,
            first_column,
            second_column,
            heads,
        })
    }

    pub fn trace<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<MsrfTrace> {
        let scales = self.encoder.forward(s, x)?;
        let mut cur = scales.clone();
        for (i, block) in self.first_column.iter().enumerate() {
            let (lo, hi) = block.forward(s, cur[i], cur[i + 1])?;
            cur[i] = lo;
            cur[i + 1] = hi;
        }
        let after_first = cur[3];
        for (i, block) in self.second_column.iter().enumerate() {
            let (_, hi) = block.forward(s, cur[i], cur[i + 1])?;
            cur[i + 1] = hi;
        }
        let deepest = alloc::vec![scales[3], after_first, cur[3]];
        let logits = self
            .heads
            .iter()
            .zip(&deepest)
            .map(|(h, &f)| h.forward(s, f))
            .collect::<Result<_>>()?;
        Ok(MsrfTrace {
            scales,
            deepest,
            logits,
        })
    }

    pub fn zero_fusion_weights<T: Real>(&self, store: &mut ParamStore<T>) {
        for b in self.first_column.iter().chain(&self.second_column) {
            b.zero_dense_weights(store);
        }
    }
}

/// Per-stream features of a PatchNet pass.
#[derive(Debug, Clone)]
pub struct PatchNetTrace {
    pub patches: Vec<Var>,
    /// `stream_stages[p][s]`: pooled output of stage `s` on patch `p`.
    pub stream_stages: Vec<Vec<Var>>,
    pub global_stages: Vec<Var>,
    /// Five patch heads followed by the global head.
    pub logits: Vec<Var>,
}

/// Patch network: each of the five patches has its own pathway of four
/// (conv block, dual-patch exchange, max pool) stages. Within a stage the
/// exchange blocks run over adjacent pairs (0,1), (1,2), (2,3), (3,4) in
/// order, each consuming the previous pair's output. A global pathway (the
/// SA-Net topology without attention) sees the whole word.
#[derive(Debug, Clone)]
pub struct PatchNet {
    /// `streams[p][s]`
    pub streams: Vec<Vec<ConvBlock>>,
    /// `exchanges[s][pair]`
    pub exchanges: Vec<Vec<DpdfeBlock>>,
    pub patch_heads: Vec<ClassHead>,
    pub global: Encoder,
    pub global_head: ClassHead,
    pub offsets: [usize; NUM_PATCHES],
    pub patch_size: usize,
}

impl PatchNet {
    pub fn new<T: Real>(init: &mut Init<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let pw = cfg.patch_widths();
        let mut streams = Vec::new();
        let mut patch_heads = Vec::new();
        for p in 0..NUM_PATCHES {
            let mut ps = init.scope(&format!("patch{p}"));
            let mut cin = 1;
            let mut blocks = Vec::new();
            for (si, &c) in pw.iter().enumerate() {
                blocks.push(ConvBlock::new(&mut ps, &format!("stage{}", si + 1), cin, c)?);
                cin = c;
            }
            streams.push(blocks);
            patch_heads.push(ClassHead::new(&mut ps, "head", cin, cfg.num_writers)?);
        }
        let mut exchanges = Vec::new();
        {
            let mut es = init.scope("exchange");
            for (si, &c) in pw.iter().enumerate() {
                let mut ss = es.scope(&format!("stage{}", si + 1));
                let stage = (0..NUM_PATCHES - 1)
                    .map(|j| {
                        DpdfeBlock::new(
                            &mut ss,
                            &format!("pair{}{}", j, j + 1),
                            c,
                            cfg.growth,
                            cfg.residual_scale,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                exchanges.push(stage);
            }
        }
        let global = Encoder::new(init, "global", 1, &cfg.channel_widths)?;
        let global_head = ClassHead::new(init, "global_head", cfg.channel_widths[3], cfg.num_writers)?;
        Ok(Self {
            streams,
            exchanges,
            patch_heads,
            global,
            global_head,
            offsets: cfg.patch_offsets(),
            patch_size: cfg.patch_size(),
        })
    }

    pub fn trace<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<PatchNetTrace> {
        let patches: Vec<Var> = self
            .offsets
            .iter()
            .map(|&o| s.graph.narrow(x, 3, o, self.patch_size))
            .collect::<Result<_>>()?;
        let mut cur = patches.clone();
        let mut stream_stages = alloc::vec![Vec::new(); NUM_PATCHES];
        for (si, stage_exchange) in self.exchanges.iter().enumerate() {
            for (p, m) in cur.iter_mut().enumerate() {
                *m = self.streams[p][si].forward(s, *m)?;
            }
            for (j, block) in stage_exchange.iter().enumerate() {
                let (a, b) = block.forward(s, cur[j], cur[j + 1])?;
                cur[j] = a;
                cur[j + 1] = b;
            }
            for (p, m) in cur.iter_mut().enumerate() {
                *m = s.graph.maxpool2d(*m, 2, 2)?;
                stream_stages[p].push(*m);
            }
        }
        let mut logits: Vec<Var> = self
            .patch_heads
            .iter()
            .zip(&cur)
            .map(|(h, &m)| h.forward(s, m))
            .collect::<Result<_>>()?;
        let global_stages = self.global.forward(s, x)?;
        logits.push(
            self.global_head
                .forward(s, *global_stages.last().expect("four stages"))?,
        );
        Ok(PatchNetTrace {
            patches,
            stream_stages,
            global_stages,
            logits,
        })
    }

    pub fn zero_fusion_weights<T: Real>(&self, store: &mut ParamStore<T>) {
        for b in self.exchanges.iter().flatten() {
            b.zero_dense_weights(store);
        }
    }
}

/// One of the three architectures.
#[derive(Debug, Clone)]
pub enum Network {
    SaNet(SaNet),
    Msrf(MsrfNet),
    PatchNet(PatchNet),
}

impl Network {
    pub fn new<T: Real>(init: &mut Init<'_, T>, cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.variant {
            Variant::SaNet => Network::SaNet(SaNet::new(init, cfg)?),
            Variant::Msrf => Network::Msrf(MsrfNet::new(init, cfg)?),
            Variant::PatchNet => Network::PatchNet(PatchNet::new(init, cfg)?),
        })
    }

    /// Logits of every classification head, each `[N, num_writers]`.
    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, cfg: &NetConfig, x: Var) -> Result<Vec<Var>> {
        check_input(s, cfg, x)?;
        match self {
            Network::SaNet(n) => Ok(alloc::vec![n.trace(s, x)?.logits]),
            Network::Msrf(n) => Ok(n.trace(s, x)?.logits),
            Network::PatchNet(n) => Ok(n.trace(s, x)?.logits),
        }
    }

    /// Zeroes every fusion block so that it reduces to its residual identity.
    /// No-op for SA-Net.
    pub fn zero_fusion_weights<T: Real>(&self, store: &mut ParamStore<T>) {
        match self {
            Network::SaNet(_) => {}
            Network::Msrf(n) => n.zero_fusion_weights(store),
            Network::PatchNet(n) => n.zero_fusion_weights(store),
        }
    }
}
