use crate::error::Result;
use crate::graph::Var;
use crate::nn::init::Init;
use crate::nn::params::{ParamId, ParamKind, ParamStore};
use crate::nn::session::{Mode, Session};
use crate::scalar::Real;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Square-kernel 2-D convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new<T: Real>(
        init: &mut Init<'_, T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let mut s = init.scope(name);
        let weight = s.kaiming(
            "weight",
            &[out_channels, in_channels, kernel, kernel],
            in_channels * kernel * kernel,
        )?;
        let bias = s.constant("bias", &[out_channels], 0.0, ParamKind::Trainable)?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    /// 3x3, stride 1, padding 1.
    pub fn same3x3<T: Real>(init: &mut Init<'_, T>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Self::new(init, name, cin, cout, 3, 1, 1)
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        s.graph.conv2d(x, w, Some(b), self.stride, self.padding)
    }

    pub fn zero<T: Real>(&self, store: &mut ParamStore<T>) {
        store.value_mut(self.weight).data_mut().fill(T::ZERO);
        store.value_mut(self.bias).data_mut().fill(T::ZERO);
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm2d {
    pub fn new<T: Real>(init: &mut Init<'_, T>, name: &str, channels: usize) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            gamma: s.constant("gamma", &[channels], 1.0, ParamKind::Trainable)?,
            beta: s.constant("beta", &[channels], 0.0, ParamKind::Trainable)?,
            running_mean: s.constant("running_mean", &[channels], 0.0, ParamKind::Buffer)?,
            running_var: s.constant("running_var", &[channels], 1.0, ParamKind::Buffer)?,
            channels,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let gamma = s.param(self.gamma);
        let beta = s.param(self.beta);
        let eps = T::from_f64(BN_EPS);
        match s.mode() {
            Mode::Train => {
                let (y, mean, var) = s.graph.batchnorm_train(x, gamma, beta, eps)?;
                let [n, _, h, w] = s.value(x).dims4("batchnorm2d")?;
                let count = n * h * w;
                let unbias = T::from_usize(count) / T::from_usize(count - 1);
                let m = T::from_f64(BN_MOMENTUM);
                let keep = T::ONE - m;
                let store = s.params_mut();
                for (r, &b) in store.value_mut(self.running_mean).data_mut().iter_mut().zip(&mean) {
                    *r = keep * *r + m * b;
                }
                for (r, &v) in store.value_mut(self.running_var).data_mut().iter_mut().zip(&var) {
                    *r = keep * *r + m * v * unbias;
                }
                Ok(y)
            }
            Mode::Eval => {
                let mean = s.params().value(self.running_mean).data().to_vec();
                let var = s.params().value(self.running_var).data().to_vec();
                s.graph.batchnorm_eval(x, gamma, beta, &mean, &var, eps)
            }
        }
    }
}

/// Fully connected layer `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<T: Real>(init: &mut Init<'_, T>, name: &str, in_features: usize, out_features: usize) -> Result<Self> {
        let mut s = init.scope(name);
        Ok(Self {
            weight: s.kaiming("weight", &[out_features, in_features], in_features)?,
            bias: s.constant("bias", &[out_features], 0.0, ParamKind::Trainable)?,
            in_features,
            out_features,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        s.graph.linear(x, w, b)
    }
}
