//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its output value and whatever it
//! needs for the backward pass. Nodes are created in topological order, so
//! [`Graph::backward`] walks the tape in reverse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::kernels::conv::{self, ConvGeom};
use crate::kernels::{norm, pool, resample};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        invstd: Vec<T>,
        batch_stats: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat(Vec<Var>),
    Add(Var, Var),
    Mul(Var, Var),
    MulChannelBroadcast {
        x: Var,
        gate: Var,
    },
    Scale(Var, T),
    Upsample2x(Var),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Recorded computation. Leaf gradients persist across [`Graph::backward`]
/// calls and accumulate until [`Graph::zero_grad`].
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Tensor<T>>>,
}

fn add_into<T: Real>(acc: &mut Option<Vec<T>>, g: Vec<T>) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(a, g)| *a += g),
        None => *acc = Some(g),
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaf_grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op_name: &'static str, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() && inputs.iter().all(|v| self.value(*v).all_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, rg, op))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let xd = self.value(x).dims4("conv2d")?;
        let wd = self.value(w).dims4("conv2d")?;
        let geom = ConvGeom::new(xd, wd, stride, padding)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.out_channels] {
                return dim_err("conv2d", format!("bias shape {:?}", self.shape(b)));
            }
        }
        let out = conv::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::new(&geom.output_shape(), out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.record("conv2d", value, &inputs, Op::Conv2d { x, w, b, geom })
    }

    /// Batch normalisation with statistics of the current batch. Returns the
    /// output together with the batch mean and biased variance so the caller
    /// can update running statistics.
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, Vec<T>, Vec<T>)> {
        let dims = self.value(x).dims4("batchnorm2d")?;
        self.check_affine(dims[1], gamma, beta)?;
        let count = dims[0] * dims[2] * dims[3];
        if count < 2 {
            return Err(Error::DegenerateBatch {
                op: "batchnorm2d",
                count,
            });
        }
        let (mean, var) = norm::channel_stats(self.value(x).data(), dims);
        let invstd: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let y = norm::normalize(
            self.value(x).data(),
            dims,
            &mean,
            &invstd,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let value = Tensor::new(&dims, y)?;
        let out = self.record(
            "batchnorm2d",
            value,
            &[x, gamma, beta],
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                invstd,
                batch_stats: true,
            },
        )?;
        Ok((out, mean, var))
    }

    /// Batch normalisation with fixed (running) statistics.
    pub fn batchnorm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        let dims = self.value(x).dims4("batchnorm2d")?;
        self.check_affine(dims[1], gamma, beta)?;
        if mean.len() != dims[1] || var.len() != dims[1] {
            return dim_err("batchnorm2d", "running statistics length");
        }
        let invstd: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let y = norm::normalize(
            self.value(x).data(),
            dims,
            mean,
            &invstd,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let value = Tensor::new(&dims, y)?;
        self.record(
            "batchnorm2d",
            value,
            &[x, gamma, beta],
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean: mean.to_vec(),
                invstd,
                batch_stats: false,
            },
        )
    }

    fn check_affine(&self, channels: usize, gamma: Var, beta: Var) -> Result<()> {
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return dim_err(
                "batchnorm2d",
                format!(
                    "affine shapes {:?}/{:?} for {channels} channels",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            );
        }
        Ok(())
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let data = src
            .data()
            .iter()
            .map(|&v| if v > T::ZERO { v } else { T::ZERO })
            .collect();
        let value = Tensor::new(src.shape(), data)?;
        self.record("relu", value, &[x], Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::new(src.shape(), data)?;
        self.record("sigmoid", value, &[x], Op::Sigmoid(x))
    }

    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let dims = self.value(x).dims4("maxpool2d")?;
        let (out, argmax, odims) = pool::maxpool_forward(self.value(x).data(), dims, kernel, stride)?;
        let value = Tensor::new(&odims, out)?;
        self.record("maxpool2d", value, &[x], Op::MaxPool { x, argmax })
    }

    /// Adaptive average pooling to `[N, C, 1, 1]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let dims = self.value(x).dims4("adaptive_avg_pool")?;
        let out = pool::global_avg_pool(self.value(x).data(), dims);
        let value = Tensor::new(&[dims[0], dims[1], 1, 1], out)?;
        self.record("adaptive_avg_pool", value, &[x], Op::GlobalAvgPool(x))
    }

    /// `y = x W^T + b`; all axes of `x` after the first are flattened.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let n = xs[0];
        let inf: usize = xs[1..].iter().product();
        let ws = self.shape(w);
        if ws.len() != 2 || ws[1] != inf || self.shape(b) != [ws[0]] {
            return dim_err(
                "linear",
                format!("input {:?}, weight {:?}, bias {:?}", xs, ws, self.shape(b)),
            );
        }
        let outf = ws[0];
        let mut y = Vec::with_capacity(n * outf);
        for _ in 0..n {
            y.extend_from_slice(self.value(b).data());
        }
        T::gemm(
            n,
            inf,
            outf,
            T::ONE,
            self.value(x).data(),
            inf as isize,
            1,
            self.value(w).data(),
            1,
            inf as isize,
            T::ONE,
            &mut y,
            outf as isize,
            1,
        );
        let value = Tensor::new(&[n, outf], y)?;
        self.record("linear", value, &[x, w, b], Op::Linear { x, w, b })
    }

    /// Concatenation along axis 1 (channels).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return dim_err("concat", "no inputs");
        };
        let base = self.shape(first).to_vec();
        if base.len() < 2 {
            return dim_err("concat", format!("rank {} input", base.len()));
        }
        let mut channels = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
                return dim_err("concat", format!("{:?} vs {:?}", s, base));
            }
            channels += s[1];
        }
        let n = base[0];
        let inner: usize = base[2..].iter().product();
        let mut data = Vec::with_capacity(n * channels * inner);
        for b in 0..n {
            for &p in parts {
                let v = self.value(p);
                let chunk = v.shape()[1] * inner;
                data.extend_from_slice(&v.data()[b * chunk..(b + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[1] = channels;
        let value = Tensor::new(&shape, data)?;
        self.record("concat", value, parts, Op::Concat(parts.to_vec()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        self.record("add", value, &[a, b], Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        self.record("mul", value, &[a, b], Op::Mul(a, b))
    }

    /// `x[N,C,H,W] * gate[N,1,H,W]`, the gate broadcast over channels.
    pub fn mul_channel_broadcast(&mut self, x: Var, gate: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("mul_channel_broadcast")?;
        if self.shape(gate) != [n, 1, h, w] {
            return dim_err(
                "mul_channel_broadcast",
                format!("gate {:?} for input {:?}", self.shape(gate), [n, c, h, w]),
            );
        }
        let plane = h * w;
        let xv = self.value(x).data();
        let gv = self.value(gate).data();
        let mut data = Vec::with_capacity(xv.len());
        for b in 0..n {
            let g = &gv[b * plane..(b + 1) * plane];
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                data.extend(xv[off..off + plane].iter().zip(g).map(|(&a, &s)| a * s));
            }
        }
        let value = Tensor::new(&[n, c, h, w], data)?;
        self.record(
            "mul_channel_broadcast",
            value,
            &[x, gate],
            Op::MulChannelBroadcast { x, gate },
        )
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| v * factor).collect();
        let value = Tensor::new(src.shape(), data)?;
        self.record("scale", value, &[x], Op::Scale(x, factor))
    }

    /// Bilinear 2x spatial upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("upsample2x")?;
        let out = resample::upsample2x_forward(self.value(x).data(), [n, c, h, w]);
        let value = Tensor::new(&[n, c, 2 * h, 2 * w], out)?;
        self.record("upsample2x", value, &[x], Op::Upsample2x(x))
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).narrow(axis, start, len)?;
        self.record("narrow", value, &[x], Op::Narrow { x, axis, start })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.record("reshape", value, &[x], Op::Reshape(x))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.record("sum", Tensor::scalar(s), &[x], Op::Sum(x))
    }

    /// Row-wise softmax of a `[N, K]` tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (n, k) = self.rows("softmax", x)?;
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(k) {
            softmax_in_place(row);
        }
        let value = Tensor::new(&[n, k], data)?;
        self.record("softmax", value, &[x], Op::Softmax(x))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, k) = self.rows("cross_entropy", logits)?;
        if labels.len() != n {
            return dim_err("cross_entropy", format!("{} labels for batch of {n}", labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Label { label: bad, classes: k });
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = T::ZERO;
        for (row, (&label, logit_row)) in probs
            .chunks_exact_mut(k)
            .zip(labels.iter().zip(self.value(logits).data().chunks_exact(k)))
        {
            let max = logit_row.iter().copied().fold(logit_row[0], T::max);
            let lse = logit_row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            loss += lse - logit_row[label];
            softmax_in_place(row);
        }
        let value = Tensor::scalar(loss / T::from_usize(n));
        self.record(
            "cross_entropy",
            value,
            &[logits],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    fn rows(&self, op: &'static str, x: Var) -> Result<(usize, usize)> {
        match *self.shape(x) {
            [n, k] => Ok((n, k)),
            ref s => dim_err(op, format!("expected [N, K], got {s:?}")),
        }
    }

    /// Propagates `d loss / d node` to every node that requires a gradient and
    /// adds the result into the leaf gradient buffers.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Rank(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::ONE]);
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize_with(self.nodes.len(), || None);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                let shape = self.nodes[idx].value.shape().to_vec();
                match &mut self.leaf_grads[idx] {
                    Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, &v)| *a += v),
                    slot => *slot = Some(Tensor::new(&shape, g)?),
                }
                continue;
            }
            self.propagate(idx, g, &mut grads);
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: Vec<T>, grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let cg = conv::conv2d_backward(self.value(*x).data(), self.value(*w).data(), &g, geom, self.wants(*x));
                if let Some(dx) = cg.input {
                    add_into(&mut grads[x.0], dx);
                }
                if self.wants(*w) {
                    add_into(&mut grads[w.0], cg.weight);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        add_into(&mut grads[b.0], cg.bias);
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                invstd,
                batch_stats,
            } => {
                let dims = node.value.dims4("batchnorm2d").expect("recorded as rank 4");
                let ng = norm::normalize_backward(
                    self.value(*x).data(),
                    dims,
                    mean,
                    invstd,
                    self.value(*gamma).data(),
                    &g,
                    *batch_stats,
                );
                if self.wants(*x) {
                    add_into(&mut grads[x.0], ng.input);
                }
                if self.wants(*gamma) {
                    add_into(&mut grads[gamma.0], ng.gamma);
                }
                if self.wants(*beta) {
                    add_into(&mut grads[beta.0], ng.beta);
                }
            }
            Op::Relu(x) => {
                let dx = g
                    .iter()
                    .zip(out)
                    .map(|(&d, &y)| if y > T::ZERO { d } else { T::ZERO })
                    .collect();
                add_into(&mut grads[x.0], dx);
            }
            Op::Sigmoid(x) => {
                let dx = g.iter().zip(out).map(|(&d, &y)| d * y * (T::ONE - y)).collect();
                add_into(&mut grads[x.0], dx);
            }
            Op::MaxPool { x, argmax } => {
                let dx = pool::maxpool_backward(&g, argmax, self.value(*x).len());
                add_into(&mut grads[x.0], dx);
            }
            Op::GlobalAvgPool(x) => {
                let dims = self.value(*x).dims4("adaptive_avg_pool").expect("recorded as rank 4");
                add_into(&mut grads[x.0], pool::global_avg_pool_backward(&g, dims));
            }
            Op::Linear { x, w, b } => {
                let n = self.shape(*x)[0];
                let inf = self.value(*x).len() / n;
                let outf = self.shape(*w)[0];
                if self.wants(*x) {
                    let mut dx = vec![T::ZERO; n * inf];
                    T::gemm(
                        n,
                        outf,
                        inf,
                        T::ONE,
                        &g,
                        outf as isize,
                        1,
                        self.value(*w).data(),
                        inf as isize,
                        1,
                        T::ZERO,
                        &mut dx,
                        inf as isize,
                        1,
                    );
                    add_into(&mut grads[x.0], dx);
                }
                if self.wants(*w) {
                    let mut dw = vec![T::ZERO; outf * inf];
                    T::gemm(
                        outf,
                        n,
                        inf,
                        T::ONE,
                        &g,
                        1,
                        outf as isize,
                        self.value(*x).data(),
                        inf as isize,
                        1,
                        T::ZERO,
                        &mut dw,
                        inf as isize,
                        1,
                    );
                    add_into(&mut grads[w.0], dw);
                }
                if self.wants(*b) {
                    let mut db = vec![T::ZERO; outf];
                    for row in g.chunks_exact(outf) {
                        db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                    add_into(&mut grads[b.0], db);
                }
            }
            Op::Concat(parts) => {
                let n = node.value.shape()[0];
                let inner: usize = node.value.shape()[2..].iter().product();
                let total = node.value.shape()[1] * inner;
                let mut offset = 0;
                for p in parts {
                    let chunk = self.shape(*p)[1] * inner;
                    if self.wants(*p) {
                        let mut dp = Vec::with_capacity(n * chunk);
                        for b in 0..n {
                            let start = b * total + offset;
                            dp.extend_from_slice(&g[start..start + chunk]);
                        }
                        add_into(&mut grads[p.0], dp);
                    }
                    offset += chunk;
                }
            }
            Op::Add(a, b) => {
                if self.wants(*b) {
                    add_into(&mut grads[b.0], g.clone());
                }
                if self.wants(*a) {
                    add_into(&mut grads[a.0], g);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let da = g.iter().zip(self.value(*b).data()).map(|(&d, &v)| d * v).collect();
                    add_into(&mut grads[a.0], da);
                }
                if self.wants(*b) {
                    let db = g.iter().zip(self.value(*a).data()).map(|(&d, &v)| d * v).collect();
                    add_into(&mut grads[b.0], db);
                }
            }
            Op::MulChannelBroadcast { x, gate } => {
                let [n, c, h, w] = self.value(*x).dims4("mul_channel_broadcast").expect("rank 4");
                let plane = h * w;
                let xv = self.value(*x).data();
                let gv = self.value(*gate).data();
                if self.wants(*x) {
                    let mut dx = Vec::with_capacity(g.len());
                    for b in 0..n {
                        let gate_row = &gv[b * plane..(b + 1) * plane];
                        for ch in 0..c {
                            let off = (b * c + ch) * plane;
                            dx.extend(g[off..off + plane].iter().zip(gate_row).map(|(&d, &s)| d * s));
                        }
                    }
                    add_into(&mut grads[x.0], dx);
                }
                if self.wants(*gate) {
                    let mut dg = vec![T::ZERO; n * plane];
                    for b in 0..n {
                        let acc = &mut dg[b * plane..(b + 1) * plane];
                        for ch in 0..c {
                            let off = (b * c + ch) * plane;
                            for ((a, &d), &v) in acc.iter_mut().zip(&g[off..off + plane]).zip(&xv[off..off + plane]) {
                                *a += d * v;
                            }
                        }
                    }
                    add_into(&mut grads[gate.0], dg);
                }
            }
            Op::Scale(x, f) => {
                let dx = g.iter().map(|&d| d * *f).collect();
                add_into(&mut grads[x.0], dx);
            }
            Op::Upsample2x(x) => {
                let dims = self.value(*x).dims4("upsample2x").expect("rank 4");
                add_into(&mut grads[x.0], resample::upsample2x_backward(&g, dims));
            }
            Op::Narrow { x, axis, start } => {
                let xs = self.shape(*x);
                let outer: usize = xs[..*axis].iter().product();
                let inner: usize = xs[axis + 1..].iter().product();
                let dim = xs[*axis];
                let len = node.value.shape()[*axis];
                let mut dx = vec![T::ZERO; self.value(*x).len()];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                add_into(&mut grads[x.0], dx);
            }
            Op::Reshape(x) => add_into(&mut grads[x.0], g),
            Op::Sum(x) => {
                let dx = vec![g[0]; self.value(*x).len()];
                add_into(&mut grads[x.0], dx);
            }
            Op::Softmax(x) => {
                let k = node.value.shape()[1];
                let mut dx = Vec::with_capacity(g.len());
                for (grow, yrow) in g.chunks_exact(k).zip(out.chunks_exact(k)) {
                    let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    dx.extend(grow.iter().zip(yrow).map(|(&d, &y)| y * (d - dot)));
                }
                add_into(&mut grads[x.0], dx);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / T::from_usize(labels.len());
                let mut dx = probs.clone();
                for (row, &label) in dx.chunks_exact_mut(k).zip(labels) {
                    row[label] -= T::ONE;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                add_into(&mut grads[logits.0], dx);
            }
        }
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

/// Numerically stable softmax over one row.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(row[0], T::max);
    let mut total = T::ZERO;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}
