//! im2col + GEMM convolution (cross-correlation, square kernels).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::scalar::Real;

/// Shape bookkeeping for one `conv2d` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    pub fn new(input: [usize; 4], weight: [usize; 4], stride: usize, padding: usize) -> Result<Self> {
        let [batch, in_channels, height, width] = input;
        let [out_channels, w_in, kh, kw] = weight;
        if w_in != in_channels {
            return dim_err(
                "conv2d",
                format!("input has {in_channels} channels, weight expects {w_in}"),
            );
        }
        if kh != kw || kh == 0 {
            return dim_err("conv2d", format!("kernel must be square and non-empty, got {kh}x{kw}"));
        }
        if stride == 0 {
            return dim_err("conv2d", "stride must be positive");
        }
        if height + 2 * padding < kh || width + 2 * padding < kw {
            return dim_err(
                "conv2d",
                format!("padded input {height}x{width} (+{padding}) smaller than kernel {kh}"),
            );
        }
        Ok(Self {
            batch,
            in_channels,
            height,
            width,
            out_channels,
            kernel: kh,
            stride,
            padding,
            out_height: (height + 2 * padding - kh) / stride + 1,
            out_width: (width + 2 * padding - kw) / stride + 1,
        })
    }

    /// Rows of the unfolded patch matrix: `C_in * k * k`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_plane(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn in_plane(&self) -> usize {
        self.height * self.width
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.out_height, self.out_width]
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Output column range `[lo, hi)` for which `ox * stride + offset - pad` is a
/// valid input column.
fn valid_range(offset: usize, pad: usize, stride: usize, extent: usize, out: usize) -> (usize, usize) {
    // ix = ox*stride + offset - pad >= 0  <=>  ox >= ceil((pad - offset) / stride)
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    // ix <= extent - 1  <=>  ox <= (extent - 1 + pad - offset) / stride
    let hi = if extent + pad > offset {
        ((extent - 1 + pad - offset) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding);
    let (oh, ow) = (g.out_height, g.out_width);
    let plane = oh * ow;
    for c in 0..g.in_channels {
        let src = &x[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ki in 0..k {
            let (ylo, yhi) = valid_range(ki, p, s, g.height, oh);
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = valid_range(kj, p, s, g.width, ow);
                for oy in 0..oh {
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if oy < ylo || oy >= yhi {
                        line.fill(T::ZERO);
                        continue;
                    }
                    let iy = oy * s + ki - p;
                    let src_row = &src[iy * g.width..(iy + 1) * g.width];
                    line[..xlo].fill(T::ZERO);
                    line[xhi..].fill(T::ZERO);
                    if s == 1 {
                        let start = xlo + kj - p;
                        line[xlo..xhi].copy_from_slice(&src_row[start..start + (xhi - xlo)]);
                    } else {
                        for ox in xlo..xhi {
                            line[ox] = src_row[ox * s + kj - p];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding);
    let (oh, ow) = (g.out_height, g.out_width);
    let plane = oh * ow;
    for c in 0..g.in_channels {
        let dst = &mut dx[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ki in 0..k {
            let (ylo, yhi) = valid_range(ki, p, s, g.height, oh);
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = valid_range(kj, p, s, g.width, ow);
                for oy in ylo..yhi {
                    let iy = oy * s + ki - p;
                    let dst_row = &mut dst[iy * g.width..(iy + 1) * g.width];
                    let line = &src[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        let start = xlo + kj - p;
                        let d = &mut dst_row[start..start + (xhi - xlo)];
                        for (a, &b) in d.iter_mut().zip(&line[xlo..xhi]) {
                            *a += b;
                        }
                    } else {
                        for ox in xlo..xhi {
                            dst_row[ox * s + kj - p] += line[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Copies `channels` planes of `h x w` into `dst` with a zero border of `pad`.
fn pad_planes<T: Real>(src: &[T], channels: usize, h: usize, w: usize, pad: usize, dst: &mut [T]) {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    dst.fill(T::ZERO);
    for c in 0..channels {
        for y in 0..h {
            let d = (c * hp + y + pad) * wp + pad;
            dst[d..d + w].copy_from_slice(&src[(c * h + y) * w..(c * h + y + 1) * w]);
        }
    }
}

/// Valid correlation of pre-padded planes: `out[co] += sum_ci w[co, ci] * xpad[ci]`.
///
/// `xpad` holds `cin` planes of `hp x wp`; `out` holds `cout` planes of
/// `(hp - k + 1) x (wp - k + 1)`.
#[allow(clippy::too_many_arguments)]
fn correlate_valid<T: Real>(
    xpad: &[T],
    cin: usize,
    hp: usize,
    wp: usize,
    weight: &[T],
    cout: usize,
    k: usize,
    out: &mut [T],
) {
    let (oh, ow) = (hp + 1 - k, wp + 1 - k);
    for co in 0..cout {
        let dst = &mut out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..cin {
            let src = &xpad[ci * hp * wp..(ci + 1) * hp * wp];
            let wk = &weight[(co * cin + ci) * k * k..(co * cin + ci + 1) * k * k];
            for oy in 0..oh {
                let o = &mut dst[oy * ow..(oy + 1) * ow];
                if k == 3 {
                    let r0 = &src[oy * wp..(oy + 1) * wp];
                    let r1 = &src[(oy + 1) * wp..(oy + 2) * wp];
                    let r2 = &src[(oy + 2) * wp..(oy + 3) * wp];
                    let (a0, a1, a2) = (&r0[..ow], &r0[1..ow + 1], &r0[2..ow + 2]);
                    let (b0, b1, b2) = (&r1[..ow], &r1[1..ow + 1], &r1[2..ow + 2]);
                    let (c0, c1, c2) = (&r2[..ow], &r2[1..ow + 1], &r2[2..ow + 2]);
                    for x in 0..ow {
                        o[x] += wk[0] * a0[x]
                            + wk[1] * a1[x]
                            + wk[2] * a2[x]
                            + wk[3] * b0[x]
                            + wk[4] * b1[x]
                            + wk[5] * b2[x]
                            + wk[6] * c0[x]
                            + wk[7] * c1[x]
                            + wk[8] * c2[x];
                    }
                } else {
                    for ky in 0..k {
                        let row = &src[(oy + ky) * wp..(oy + ky + 1) * wp];
                        for kx in 0..k {
                            let wv = wk[ky * k + kx];
                            for (a, &b) in o.iter_mut().zip(&row[kx..kx + ow]) {
                                *a += wv * b;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `dw[co, ci, ky, kx] += sum dy[co] * xpad[ci] shifted by (ky, kx)`.
fn correlate_weight_grad<T: Real>(xpad: &[T], g: &ConvGeom, dy: &[T], dw: &mut [T], acc: &mut [T]) {
    let k = g.kernel;
    let (oh, ow) = (g.out_height, g.out_width);
    let (hp, wp) = (g.height + 2 * g.padding, g.width + 2 * g.padding);
    for co in 0..g.out_channels {
        let gy = &dy[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..g.in_channels {
            let src = &xpad[ci * hp * wp..(ci + 1) * hp * wp];
            if k == 3 {
                let taps = weight_grad_3x3(src, wp, gy, oh, ow);
                let base = (co * g.in_channels + ci) * 9;
                for (t, v) in taps.into_iter().enumerate() {
                    dw[base + t] += v;
                }
                continue;
            }
            // One row-long accumulator per tap keeps the inner loop a plain
            // elementwise multiply-add.
            acc.fill(T::ZERO);
            for oy in 0..oh {
                let d = &gy[oy * ow..(oy + 1) * ow];
                for ky in 0..k {
                    let row = &src[(oy + ky) * wp..(oy + ky + 1) * wp];
                    for kx in 0..k {
                        let a = &mut acc[(ky * k + kx) * ow..(ky * k + kx + 1) * ow];
                        let r = &row[kx..kx + ow];
                        for x in 0..ow {
                            a[x] += d[x] * r[x];
                        }
                    }
                }
            }
            let base = (co * g.in_channels + ci) * k * k;
            for (t, a) in acc.chunks_exact(ow).enumerate() {
                dw[base + t] += a.iter().copied().sum::<T>();
            }
        }
    }
}

/// Nine tap sums of a 3x3 weight gradient for one (output, input) channel
/// pair, accumulated in `LANES`-wide registers.
fn weight_grad_3x3<T: Real>(src: &[T], wp: usize, gy: &[T], oh: usize, ow: usize) -> [T; 9] {
    const LANES: usize = 4;
    let mut lanes = [[T::ZERO; LANES]; 9];
    let mut tail = [T::ZERO; 9];
    let body = ow - ow % LANES;
    for oy in 0..oh {
        let d = &gy[oy * ow..(oy + 1) * ow];
        let rows = [
            &src[oy * wp..(oy + 1) * wp],
            &src[(oy + 1) * wp..(oy + 2) * wp],
            &src[(oy + 2) * wp..(oy + 3) * wp],
        ];
        let mut x0 = 0;
        while x0 < body {
            let dv: &[T; LANES] = d[x0..x0 + LANES].try_into().unwrap();
            for ky in 0..3 {
                for kx in 0..3 {
                    let r: &[T; LANES] = rows[ky][x0 + kx..x0 + kx + LANES].try_into().unwrap();
                    let acc = &mut lanes[ky * 3 + kx];
                    for l in 0..LANES {
                        acc[l] += dv[l] * r[l];
                    }
                }
            }
            x0 += LANES;
        }
        for x in body..ow {
            for ky in 0..3 {
                for kx in 0..3 {
                    tail[ky * 3 + kx] += d[x] * rows[ky][x + kx];
                }
            }
        }
    }
    let mut out = tail;
    for (o, l) in out.iter_mut().zip(&lanes) {
        *o += l.iter().copied().sum::<T>();
    }
    out
}

/// Whether the direct kernel is preferable to im2col + GEMM.
fn use_direct(g: &ConvGeom) -> bool {
    g.stride == 1 && g.kernel > 1 && g.padding < g.kernel && g.out_channels <= DIRECT_MAX_OUT
}

/// Output-channel count up to which stride-1 convolutions skip im2col.
const DIRECT_MAX_OUT: usize = 4;

pub fn conv2d_forward<T: Real>(x: &[T], weight: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let plane = g.out_plane();
    let kk = g.patch_len();
    let in_item = g.in_channels * g.in_plane();
    let out_item = g.out_channels * plane;
    let mut out = vec![T::ZERO; g.batch * out_item];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else if use_direct(g) {
        vec![T::ZERO; g.in_channels * (g.height + 2 * g.padding) * (g.width + 2 * g.padding)]
    } else {
        vec![T::ZERO; kk * plane]
    };
    for n in 0..g.batch {
        let xn = &x[n * in_item..(n + 1) * in_item];
        let on = &mut out[n * out_item..(n + 1) * out_item];
        if let Some(b) = bias {
            for (co, row) in on.chunks_exact_mut(plane).enumerate() {
                row.fill(b[co]);
            }
        }
        if use_direct(g) {
            let (hp, wp) = (g.height + 2 * g.padding, g.width + 2 * g.padding);
            pad_planes(xn, g.in_channels, g.height, g.width, g.padding, &mut cols);
            correlate_valid(&cols, g.in_channels, hp, wp, weight, g.out_channels, g.kernel, on);
            continue;
        }
        let beta = if bias.is_some() { T::ONE } else { T::ZERO };
        let patches: &[T] = if g.is_pointwise() {
            xn
        } else {
            im2col(xn, g, &mut cols);
            &cols
        };
        T::gemm(
            g.out_channels,
            kk,
            plane,
            T::ONE,
            weight,
            kk as isize,
            1,
            patches,
            plane as isize,
            1,
            beta,
            on,
            plane as isize,
            1,
        );
    }
    out
}

/// Gradients of a convolution. `dx` is skipped when `need_input_grad` is false.
pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Real>(x: &[T], weight: &[T], dy: &[T], g: &ConvGeom, need_input_grad: bool) -> ConvGrads<T> {
    let plane = g.out_plane();
    let kk = g.patch_len();
    let in_item = g.in_channels * g.in_plane();
    let out_item = g.out_channels * plane;
    let mut dw = vec![T::ZERO; g.out_channels * kk];
    let mut db = vec![T::ZERO; g.out_channels];
    let mut dx = if need_input_grad {
        Some(vec![T::ZERO; g.batch * in_item])
    } else {
        None
    };
    let pointwise = g.is_pointwise();
    let direct = use_direct(g);
    let mut cols = if pointwise {
        Vec::new()
    } else if direct {
        vec![T::ZERO; g.in_channels * (g.height + 2 * g.padding) * (g.width + 2 * g.padding)]
    } else {
        vec![T::ZERO; kk * plane]
    };
    let (mut acc, mut dypad, mut flipped) = (Vec::new(), Vec::new(), Vec::new());
    if direct {
        let (k, q) = (g.kernel, g.kernel - 1 - g.padding);
        acc = vec![T::ZERO; k * k * g.out_width];
        if need_input_grad {
            dypad = vec![T::ZERO; g.out_channels * (g.out_height + 2 * q) * (g.out_width + 2 * q)];
            flipped = vec![T::ZERO; weight.len()];
            for co in 0..g.out_channels {
                for ci in 0..g.in_channels {
                    for t in 0..k * k {
                        flipped[(ci * g.out_channels + co) * k * k + (k * k - 1 - t)] =
                            weight[(co * g.in_channels + ci) * k * k + t];
                    }
                }
            }
        }
    }
    let mut dcols = if need_input_grad && !pointwise && !direct {
        vec![T::ZERO; kk * plane]
    } else {
        Vec::new()
    };
    for n in 0..g.batch {
        let xn = &x[n * in_item..(n + 1) * in_item];
        let dyn_ = &dy[n * out_item..(n + 1) * out_item];
        for (co, row) in dyn_.chunks_exact(plane).enumerate() {
            db[co] += row.iter().copied().sum::<T>();
        }
        if direct {
            let (k, p) = (g.kernel, g.padding);
            pad_planes(xn, g.in_channels, g.height, g.width, p, &mut cols);
            correlate_weight_grad(&cols, g, dyn_, &mut dw, &mut acc);
            if let Some(dx) = dx.as_mut() {
                // The input gradient is a full correlation of dy with the
                // flipped, transposed kernel.
                let q = k - 1 - p;
                pad_planes(dyn_, g.out_channels, g.out_height, g.out_width, q, &mut dypad);
                let dxn = &mut dx[n * in_item..(n + 1) * in_item];
                correlate_valid(
                    &dypad,
                    g.out_channels,
                    g.out_height + 2 * q,
                    g.out_width + 2 * q,
                    &flipped,
                    g.in_channels,
                    k,
                    dxn,
                );
            }
            continue;
        }
        let patches: &[T] = if pointwise {
            xn
        } else {
            im2col(xn, g, &mut cols);
            &cols
        };
        // dW += dY_n * patches^T
        T::gemm(
            g.out_channels,
            plane,
            kk,
            T::ONE,
            dyn_,
            plane as isize,
            1,
            patches,
            1,
            plane as isize,
            T::ONE,
            &mut dw,
            kk as isize,
            1,
        );
        if let Some(dx) = dx.as_mut() {
            let dxn = &mut dx[n * in_item..(n + 1) * in_item];
            // dPatches = W^T * dY_n
            let target: &mut [T] = if pointwise { dxn } else { &mut dcols };
            T::gemm(
                kk,
                g.out_channels,
                plane,
                T::ONE,
                weight,
                1,
                kk as isize,
                dyn_,
                plane as isize,
                1,
                T::ZERO,
                target,
                plane as isize,
                1,
            );
            if !pointwise {
                col2im(&dcols, g, dxn);
            }
        }
    }
    ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Six-loop direct correlation used as the reference.
    fn naive(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.batch * g.out_channels * g.out_plane()];
        for n in 0..g.batch {
            for co in 0..g.out_channels {
                for oy in 0..g.out_height {
                    for ox in 0..g.out_width {
                        let mut acc = b[co];
                        for ci in 0..g.in_channels {
                            for ki in 0..g.kernel {
                                for kj in 0..g.kernel {
                                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                        continue;
                                    }
                                    let xi =
                                        ((n * g.in_channels + ci) * g.height + iy as usize) * g.width + ix as usize;
                                    let wi = ((co * g.in_channels + ci) * g.kernel + ki) * g.kernel + kj;
                                    acc += x[xi] * w[wi];
                                }
                            }
                        }
                        out[((n * g.out_channels + co) * g.out_height + oy) * g.out_width + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn pseudo(len: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn matches_naive_loops_across_configurations() {
        for &(n, ci, h, w, co, k, s, p) in &[
            (1, 2, 5, 5, 3, 3, 1, 0),
            (2, 4, 8, 8, 3, 3, 1, 1),
            (2, 3, 7, 6, 2, 3, 2, 1),
            (1, 5, 4, 4, 6, 1, 1, 0),
            (1, 1, 3, 9, 2, 2, 2, 0),
        ] {
            let g = ConvGeom::new([n, ci, h, w], [co, ci, k, k], s, p).unwrap();
            let x = pseudo(n * ci * h * w, 1);
            let wt = pseudo(co * ci * k * k, 2);
            let b = pseudo(co, 3);
            let fast = conv2d_forward(&x, &wt, Some(&b), &g);
            let slow = naive(&x, &wt, &b, &g);
            for (a, e) in fast.iter().zip(&slow) {
                assert!((a - e).abs() < 1e-12, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn output_shape_arithmetic() {
        let g = ConvGeom::new([1, 1, 64, 128], [64, 1, 3, 3], 1, 1).unwrap();
        assert_eq!(g.output_shape(), [1, 64, 64, 128]);
        let g = ConvGeom::new([1, 8, 8, 8], [8, 8, 3, 3], 2, 1).unwrap();
        assert_eq!(g.output_shape(), [1, 8, 4, 4]);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        assert!(ConvGeom::new([1, 3, 5, 5], [4, 2, 3, 3], 1, 1).is_err());
        assert!(ConvGeom::new([1, 2, 1, 1], [4, 2, 3, 3], 1, 0).is_err());
    }

    #[test]
    fn backward_input_grad_is_adjoint_of_forward() {
        // <conv(x), dy> == <x, conv^T(dy)> for bias-free convolution.
        let g = ConvGeom::new([2, 3, 6, 5], [4, 3, 3, 3], 2, 1).unwrap();
        let x = pseudo(2 * 3 * 30, 4);
        let w = pseudo(4 * 27, 5);
        let dy = pseudo(2 * 4 * g.out_plane(), 6);
        let y = conv2d_forward(&x, &w, None, &g);
        let grads = conv2d_backward(&x, &w, &dy, &g, true);
        let lhs: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(grads.input.as_ref().unwrap()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        let rhs_w: f64 = w.iter().zip(&grads.weight).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    /// Reference gradients accumulated with the same six loops as `naive`.
    fn naive_backward(x: &[f64], w: &[f64], dy: &[f64], g: &ConvGeom) -> (Vec<f64>, Vec<f64>) {
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        for n in 0..g.batch {
            for co in 0..g.out_channels {
                for oy in 0..g.out_height {
                    for ox in 0..g.out_width {
                        let d = dy[((n * g.out_channels + co) * g.out_height + oy) * g.out_width + ox];
                        for ci in 0..g.in_channels {
                            for ki in 0..g.kernel {
                                for kj in 0..g.kernel {
                                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                        continue;
                                    }
                                    let xi =
                                        ((n * g.in_channels + ci) * g.height + iy as usize) * g.width + ix as usize;
                                    let wi = ((co * g.in_channels + ci) * g.kernel + ki) * g.kernel + kj;
                                    dx[xi] += d * w[wi];
                                    dw[wi] += d * x[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
        (dx, dw)
    }

    #[test]
    fn backward_matches_naive_loops_on_both_paths() {
        for &(n, ci, h, w, co, k, s, p) in &[
            // direct path: narrow outputs, stride 1
            (2, 5, 7, 11, 3, 3, 1, 1),
            (1, 3, 6, 13, 2, 3, 1, 0),
            (1, 2, 9, 7, 4, 5, 1, 2),
            (2, 1, 5, 5, 1, 3, 1, 2),
            // im2col path
            (2, 3, 7, 6, 6, 3, 1, 1),
            (2, 3, 7, 6, 2, 3, 2, 1),
            (1, 5, 4, 4, 6, 1, 1, 0),
        ] {
            let g = ConvGeom::new([n, ci, h, w], [co, ci, k, k], s, p).unwrap();
            let x = pseudo(n * ci * h * w, 7);
            let wt = pseudo(co * ci * k * k, 8);
            let b = pseudo(co, 9);
            let fwd = conv2d_forward(&x, &wt, Some(&b), &g);
            for (a, e) in fwd.iter().zip(&naive(&x, &wt, &b, &g)) {
                assert!((a - e).abs() < 1e-12, "forward {a} vs {e}");
            }
            let dy = pseudo(fwd.len(), 10);
            let grads = conv2d_backward(&x, &wt, &dy, &g, true);
            let (dx, dw) = naive_backward(&x, &wt, &dy, &g);
            for (a, e) in grads.input.unwrap().iter().zip(&dx) {
                assert!((a - e).abs() < 1e-12, "dx {a} vs {e}");
            }
            for (a, e) in grads.weight.iter().zip(&dw) {
                assert!((a - e).abs() < 1e-12, "dw {a} vs {e}");
            }
            for c in 0..co {
                let expect: f64 = (0..n)
                    .flat_map(|i| dy[(i * co + c) * g.out_plane()..(i * co + c + 1) * g.out_plane()].iter())
                    .sum();
                assert!((grads.bias[c] - expect).abs() < 1e-12);
            }
        }
    }
}
