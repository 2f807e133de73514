//! Composite blocks: convolutional block, spatial attention unit, dense
//! two-stream fusion blocks (dual-scale and dual-patch) and the
//! classification head.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::graph::Var;
use crate::nn::init::Init;
use crate::nn::layers::{BatchNorm2d, Conv2d, Linear};
use crate::nn::params::ParamStore;
use crate::nn::session::Session;
use crate::scalar::Real;

/// Densely connected conv layers per stream of a fusion block.
pub const DENSE_LAYERS: usize = 5;

/// Residual scale applied to the dense output of a fusion block.
pub const DEFAULT_RESIDUAL_SCALE: f64 = 0.4;

/// `ReLU(BN(Conv(Conv(x))))`, both convolutions 3x3 with padding 1 and no
/// activation in between.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub bn: BatchNorm2d,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvBlock {
    pub fn new<T: Real>(init: &mut Init<'_, T>, name: &str, in_channels: usize, out_channels: usize) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            conv1: Conv2d::same3x3(&mut s, "conv1", in_channels, out_channels)?,
            conv2: Conv2d::same3x3(&mut s, "conv2", out_channels, out_channels)?,
            bn: BatchNorm2d::new(&mut s, "bn", out_channels)?,
            in_channels,
            out_channels,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let [_, c, _, _] = s.value(x).dims4("conv_block")?;
        if c != self.in_channels {
            return dim_err("conv_block", format!("expected {} channels, got {c}", self.in_channels));
        }
        let y = self.conv1.forward(s, x)?;
        let y = self.conv2.forward(s, y)?;
        let y = self.bn.forward(s, y)?;
        s.graph.relu(y)
    }
}

/// Spatial attention unit: a single-channel map
/// `A = sigmoid(conv2(relu(conv1(x))))` in (0, 1) gates every channel of `x`.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub channels: usize,
}

impl SpatialAttention {
    pub fn new<T: Real>(init: &mut Init<'_, T>, name: &str, channels: usize) -> Result<Self> {
        if channels < 2 || !channels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "spatial attention needs an even channel count, got {channels}"
            )));
        }
        let mut s = init.scope(name);
        Ok(Self {
            conv1: Conv2d::same3x3(&mut s, "conv1", channels, channels / 2)?,
            conv2: Conv2d::same3x3(&mut s, "conv2", channels / 2, 1)?,
            channels,
        })
    }

    /// Returns `(x_spa, a_att)`.
    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<(Var, Var)> {
        let h = self.conv1.forward(s, x)?;
        let h = s.graph.relu(h)?;
        let logits = self.conv2.forward(s, h)?;
        let att = s.graph.sigmoid(logits)?;
        let gated = s.graph.mul_channel_broadcast(x, att)?;
        Ok((gated, att))
    }
}

/// Adaptive average pooling followed by a fully connected layer.
#[derive(Debug, Clone)]
pub struct ClassHead {
    pub fc: Linear,
}

impl ClassHead {
    pub fn new<T: Real>(init: &mut Init<'_, T>, name: &str, channels: usize, classes: usize) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            fc: Linear::new(&mut s, "fc", channels, classes)?,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let pooled = s.graph.global_avg_pool(x)?;
        self.fc.forward(s, pooled)
    }
}

/// One conv3x3 -> BN -> ReLU layer of a dense stream.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

/// Densely connected stream of a two-stream fusion block.
///
/// Layer `i` (0-based) sees the stream input, its own `i` earlier outputs and
/// the partner stream's `i` earlier outputs: `C + 2 i g` channels. The final
/// 1x1 `fuse` conv maps all of them (`C + 2 * 5 g`) back to `C` channels.
#[derive(Debug, Clone)]
pub struct DenseStream {
    pub layers: Vec<DenseLayer>,
    pub fuse: Conv2d,
    pub channels: usize,
    pub growth: usize,
}

impl DenseStream {
    pub fn new<T: Real>(init: &mut Init<'_, T>, name: &str, channels: usize, growth: usize) -> Result<Self> {
        if growth == 0 {
            return Err(Error::Config("dense growth must be positive".into()));
        }
        let mut s = init.scope(name);
        let mut layers = Vec::with_capacity(DENSE_LAYERS);
        for i in 0..DENSE_LAYERS {
            let mut ls = s.scope(&format!("dense{i}"));
            layers.push(DenseLayer {
                conv: Conv2d::same3x3(&mut ls, "conv", Self::layer_input_channels(channels, growth, i), growth)?,
                bn: BatchNorm2d::new(&mut ls, "bn", growth)?,
            });
        }
        let fuse = Conv2d::new(
            &mut s,
            "fuse",
            Self::layer_input_channels(channels, growth, DENSE_LAYERS),
            channels,
            1,
            1,
            0,
        )?;
        Ok(Self {
            layers,
            fuse,
            channels,
            growth,
        })
    }

    /// Channel count entering dense layer `layer`, or the fuse conv when
    /// `layer == DENSE_LAYERS`.
    pub fn layer_input_channels(channels: usize, growth: usize, layer: usize) -> usize {
        channels + 2 * layer * growth
    }

    fn gather<T: Real>(s: &mut Session<'_, T>, own: &[Var], partner: &[Var]) -> Result<Var> {
        if own.len() == 1 && partner.is_empty() {
            return Ok(own[0]);
        }
        let parts: Vec<Var> = own.iter().chain(partner).copied().collect();
        s.graph.concat(&parts)
    }

    fn layer<T: Real>(&self, s: &mut Session<'_, T>, i: usize, own: &[Var], partner: &[Var]) -> Result<Var> {
        let x = Self::gather(s, own, partner)?;
        let l = &self.layers[i];
        let y = l.conv.forward(s, x)?;
        let y = l.bn.forward(s, y)?;
        s.graph.relu(y)
    }

    fn fused<T: Real>(&self, s: &mut Session<'_, T>, own: &[Var], partner: &[Var]) -> Result<Var> {
        let x = Self::gather(s, own, partner)?;
        self.fuse.forward(s, x)
    }

    /// Zeroes every convolution of the stream.
    pub fn zero<T: Real>(&self, store: &mut ParamStore<T>) {
        for l in &self.layers {
            l.conv.zero(store);
        }
        self.fuse.zero(store);
    }
}

type Transfer<'f, T> = &'f dyn Fn(&mut Session<'_, T>, usize, Var) -> Result<Var>;

/// Runs two dense streams in lockstep. After every layer each stream's new
/// feature is handed (through `to_a` / `to_b`) to the other stream, and both
/// outputs get the residual `w * fused + input`.
#[allow(clippy::too_many_arguments)]
fn exchange<T: Real>(
    s: &mut Session<'_, T>,
    a: &DenseStream,
    b: &DenseStream,
    xa: Var,
    xb: Var,
    residual_scale: f64,
    to_a: Transfer<'_, T>,
    to_b: Transfer<'_, T>,
) -> Result<(Var, Var)> {
    let mut own_a = Vec::with_capacity(DENSE_LAYERS + 1);
    let mut own_b = Vec::with_capacity(DENSE_LAYERS + 1);
    let mut from_b = Vec::with_capacity(DENSE_LAYERS);
    let mut from_a = Vec::with_capacity(DENSE_LAYERS);
    own_a.push(xa);
    own_b.push(xb);
    for i in 0..DENSE_LAYERS {
        let fa = a.layer(s, i, &own_a, &from_b)?;
        let fb = b.layer(s, i, &own_b, &from_a)?;
        own_a.push(fa);
        own_b.push(fb);
        from_b.push(to_a(s, i, fb)?);
        from_a.push(to_b(s, i, fa)?);
    }
    let w = T::from_f64(residual_scale);
    let ya = a.fused(s, &own_a, &from_b)?;
    let ya = s.graph.scale(ya, w)?;
    let ya = s.graph.add(ya, xa)?;
    let yb = b.fused(s, &own_b, &from_a)?;
    let yb = s.graph.scale(yb, w)?;
    let yb = s.graph.add(yb, xb)?;
    Ok((ya, yb))
}

/// Dual patch dense feature exchange block: two same-resolution patch streams
/// that exchange features after every dense layer.
#[derive(Debug, Clone)]
pub struct DpdfeBlock {
    pub first: DenseStream,
    pub second: DenseStream,
    pub residual_scale: f64,
}

impl DpdfeBlock {
    pub fn new<T: Real>(
        init: &mut Init<'_, T>,
        name: &str,
        channels: usize,
        growth: usize,
        residual_scale: f64,
    ) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            first: DenseStream::new(&mut s, "stream_a", channels, growth)?,
            second: DenseStream::new(&mut s, "stream_b", channels, growth)?,
            residual_scale,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, m_p: Var, m_q: Var) -> Result<(Var, Var)> {
        if s.value(m_p).shape() != s.value(m_q).shape() {
            return dim_err(
                "dpdfe",
                format!(
                    "patch streams differ: {:?} vs {:?}",
                    s.value(m_p).shape(),
                    s.value(m_q).shape()
                ),
            );
        }
        let [_, c, _, _] = s.value(m_p).dims4("dpdfe")?;
        if c != self.first.channels {
            return dim_err("dpdfe", format!("expected {} channels, got {c}", self.first.channels));
        }
        let pass = |_: &mut Session<'_, T>, _: usize, v: Var| Ok(v);
        exchange(
            s,
            &self.first,
            &self.second,
            m_p,
            m_q,
            self.residual_scale,
            &pass,
            &pass,
        )
    }

    /// The same parameters with the two streams' roles swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            first: self.second.clone(),
            second: self.first.clone(),
            residual_scale: self.residual_scale,
        }
    }

    pub fn zero_dense_weights<T: Real>(&self, store: &mut ParamStore<T>) {
        self.first.zero(store);
        self.second.zero(store);
    }
}

/// Dual-scale dense fusion block over a fine (`lo`) stream and a coarse
/// (`hi`) stream at half its resolution. Coarse features reach the fine
/// stream through bilinear 2x upsampling; fine features reach the coarse
/// stream through a learned stride-2 3x3 convolution per layer.
#[derive(Debug, Clone)]
pub struct DsdfBlock {
    pub lo: DenseStream,
    pub hi: DenseStream,
    pub down: Vec<Conv2d>,
    pub residual_scale: f64,
}

impl DsdfBlock {
    pub fn new<T: Real>(
        init: &mut Init<'_, T>,
        name: &str,
        lo_channels: usize,
        hi_channels: usize,
        growth: usize,
        residual_scale: f64,
    ) -> Result<Self> {
        let mut s = init.scope(name);
        let lo = DenseStream::new(&mut s, "stream_lo", lo_channels, growth)?;
        let hi = DenseStream::new(&mut s, "stream_hi", hi_channels, growth)?;
        let down = (0..DENSE_LAYERS)
            .map(|i| Conv2d::new(&mut s, &format!("down{i}"), growth, growth, 3, 2, 1))
            .collect::<Result<_>>()?;
        Ok(Self {
            lo,
            hi,
            down,
            residual_scale,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x_lo: Var, x_hi: Var) -> Result<(Var, Var)> {
        let [nl, cl, hl, wl] = s.value(x_lo).dims4("dsdf")?;
        let [nh, ch, hh, wh] = s.value(x_hi).dims4("dsdf")?;
        if nl != nh || hl != 2 * hh || wl != 2 * wh {
            return dim_err(
                "dsdf",
                format!(
                    "coarse input {:?} is not half of fine input {:?}",
                    [nh, ch, hh, wh],
                    [nl, cl, hl, wl]
                ),
            );
        }
        if cl != self.lo.channels || ch != self.hi.channels {
            return dim_err(
                "dsdf",
                format!(
                    "channels ({cl}, {ch}) vs configured ({}, {})",
                    self.lo.channels, self.hi.channels
                ),
            );
        }
        let up = |s: &mut Session<'_, T>, _: usize, v: Var| s.graph.upsample2x(v);
        let down = |s: &mut Session<'_, T>, i: usize, v: Var| self.down[i].forward(s, v);
        exchange(s, &self.lo, &self.hi, x_lo, x_hi, self.residual_scale, &up, &down)
    }

    pub fn zero_dense_weights<T: Real>(&self, store: &mut ParamStore<T>) {
        self.lo.zero(store);
        self.hi.zero(store);
        for d in &self.down {
            d.zero(store);
        }
    }
}
