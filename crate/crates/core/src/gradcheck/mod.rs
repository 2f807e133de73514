//! Central finite-difference gradient checking in 64-bit precision.
//!
//! The loss is evaluated only through forward passes; the analytic side comes
//! from [`Session::backward`]. Probes are drawn uniformly over every element
//! of every checked input and trainable parameter.

pub mod cases;

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::graph::Var;
use crate::nn::init::seeded_rng;
use crate::nn::params::{ParamKind, ParamStore};
use crate::nn::session::{Mode, Session};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_PROBES: usize = 20;
/// Denominator floor of the relative error, so that two vanishing gradients
/// compare by absolute difference instead of amplifying round-off.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    /// `input[i]` or the parameter name.
    pub target: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.probes.iter().all(|p| p.rel_err < tol)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub probes: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            probes: DEFAULT_PROBES,
            seed: 0,
            mode: Mode::Train,
        }
    }
}

/// Checks `d loss / d (inputs, trainable params)`.
///
/// `loss_fn` receives a session and one graph variable per entry of `inputs`
/// and must return a scalar loss.
pub fn check<F>(
    params: &mut ParamStore<f64>,
    inputs: &[Tensor<f64>],
    cfg: GradCheckConfig,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Session<'_, f64>, &[Var]) -> Result<Var>,
{
    // Analytic pass.
    params.zero_grad();
    let input_grads: Vec<Option<Tensor<f64>>> = {
        let mut s = Session::new(params, cfg.mode);
        let vars: Vec<Var> = inputs.iter().map(|t| s.input_with_grad(t.clone())).collect();
        let loss = loss_fn(&mut s, &vars)?;
        s.backward(loss)?;
        vars.iter().map(|&v| s.graph.grad(v).cloned()).collect()
    };

    // Probe targets: inputs first, then trainable parameters.
    let mut sizes: Vec<(Target, usize)> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| (Target::Input(i), t.len()))
        .collect();
    for (i, e) in params.entries().iter().enumerate() {
        if e.kind == ParamKind::Trainable {
            sizes.push((Target::Param(i), e.value.len()));
        }
    }
    let total: usize = sizes.iter().map(|s| s.1).sum();
    let mut rng = seeded_rng(cfg.seed);
    let mut inputs = inputs.to_vec();
    let mut probes = Vec::with_capacity(cfg.probes);
    for _ in 0..cfg.probes {
        let mut flat = rng.random_range(0..total);
        let (target, index) = sizes
            .iter()
            .find_map(|&(t, n)| {
                if flat < n {
                    Some((t, flat))
                } else {
                    flat -= n;
                    None
                }
            })
            .expect("flat index within total");
        let analytic = match target {
            Target::Input(i) => input_grads[i].as_ref().map_or(0.0, |g| g.data()[index]),
            Target::Param(i) => params.entries()[i].grad.data()[index],
        };
        let mut eval_at = |delta: f64, params: &mut ParamStore<f64>, inputs: &mut [Tensor<f64>]| -> Result<f64> {
            let slot = match target {
                Target::Input(i) => &mut inputs[i].data_mut()[index],
                Target::Param(i) => &mut params.entries_mut()[i].value.data_mut()[index],
            };
            let orig = *slot;
            *slot = orig + delta;
            let out = {
                let mut s = Session::new(params, cfg.mode);
                let vars: Vec<Var> = inputs.iter().map(|t| s.input(t.clone())).collect();
                let loss = loss_fn(&mut s, &vars)?;
                s.value(loss).data()[0]
            };
            let slot = match target {
                Target::Input(i) => &mut inputs[i].data_mut()[index],
                Target::Param(i) => &mut params.entries_mut()[i].value.data_mut()[index],
            };
            *slot = orig;
            Ok(out)
        };
        let plus = eval_at(cfg.step, params, &mut inputs)?;
        let minus = eval_at(-cfg.step, params, &mut inputs)?;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        probes.push(Probe {
            target: match target {
                Target::Input(i) => alloc::format!("input[{i}]"),
                Target::Param(i) => params.entries()[i].name.clone(),
            },
            index,
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric),
        });
    }
    Ok(GradCheckReport { probes })
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Input(usize),
    Param(usize),
}

/// Deterministic pseudo-random tensor with entries in `[-scale, scale]`.
pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = seeded_rng(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Scalar loss `sum(x * weights)` with fixed pseudo-random weights, so every
/// output element contributes with a distinct sensitivity.
pub fn weighted_sum(s: &mut Session<'_, f64>, x: Var, seed: u64) -> Result<Var> {
    let shape = s.value(x).shape().to_vec();
    let w = s.input(random_tensor(&shape, seed ^ 0x5eed, 1.0));
    let prod = s.graph.mul(x, w)?;
    s.graph.sum(prod)
}
