//! Named gradient-check cases for every graph op, every block and the three
//! networks at the tiny configuration.

use alloc::vec;
use alloc::vec::Vec;

use crate::arch::config::{NetConfig, Variant};
use crate::arch::model::{summed_cross_entropy, Model};
use crate::error::Result;
use crate::gradcheck::{check, random_tensor, weighted_sum, GradCheckConfig, GradCheckReport};
use crate::graph::Var;
use crate::nn::blocks::{ClassHead, ConvBlock, DpdfeBlock, DsdfBlock, SpatialAttention, DEFAULT_RESIDUAL_SCALE};
use crate::nn::init::{seeded_rng, Init};
use crate::nn::params::ParamStore;
use crate::nn::session::Session;
use crate::tensor::Tensor;

/// Outcome of one named check.
#[derive(Debug)]
pub struct Case {
    pub name: &'static str,
    pub report: Result<GradCheckReport>,
}

impl Case {
    pub fn passes(&self, tol: f64) -> bool {
        self.report.as_ref().is_ok_and(|r| r.passes(tol))
    }
}

fn cfg(seed: u64) -> GradCheckConfig {
    GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    }
}

/// Check of a parameter-free function of `inputs`, reduced by a weighted sum.
fn op_case<F>(name: &'static str, seed: u64, inputs: Vec<Tensor<f64>>, mut f: F) -> Case
where
    F: FnMut(&mut Session<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let report = check(&mut store, &inputs, cfg(seed), |s, v| {
        let y = f(s, v)?;
        weighted_sum(s, y, seed)
    });
    Case { name, report }
}

fn rt(shape: &[usize], seed: u64) -> Tensor<f64> {
    random_tensor(shape, seed, 1.0)
}

/// One case per differentiable graph op.
pub fn op_cases() -> Vec<Case> {
    let eps = crate::nn::layers::BN_EPS;
    vec![
        op_case(
            "conv2d",
            1,
            vec![rt(&[2, 3, 5, 6], 1), rt(&[4, 3, 3, 3], 2), rt(&[4], 3)],
            |s, v| s.graph.conv2d(v[0], v[1], Some(v[2]), 1, 1),
        ),
        op_case(
            "conv2d_narrow",
            2,
            vec![rt(&[2, 5, 6, 7], 4), rt(&[2, 5, 3, 3], 5), rt(&[2], 6)],
            |s, v| s.graph.conv2d(v[0], v[1], Some(v[2]), 1, 1),
        ),
        op_case(
            "conv2d_strided",
            3,
            vec![rt(&[2, 3, 6, 6], 7), rt(&[4, 3, 3, 3], 8), rt(&[4], 9)],
            |s, v| s.graph.conv2d(v[0], v[1], Some(v[2]), 2, 1),
        ),
        op_case(
            "batchnorm2d_train",
            4,
            vec![rt(&[3, 2, 3, 3], 10), rt(&[2], 11), rt(&[2], 12)],
            |s, v| Ok(s.graph.batchnorm_train(v[0], v[1], v[2], eps)?.0),
        ),
        op_case(
            "batchnorm2d_eval",
            5,
            vec![rt(&[2, 2, 3, 3], 13), rt(&[2], 14), rt(&[2], 15)],
            |s, v| s.graph.batchnorm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[0.7, 1.3], eps),
        ),
        op_case("relu", 6, vec![rt(&[2, 3, 4, 4], 16)], |s, v| s.graph.relu(v[0])),
        op_case("sigmoid", 7, vec![rt(&[2, 3, 4, 4], 17)], |s, v| s.graph.sigmoid(v[0])),
        op_case("maxpool2d", 8, vec![rt(&[2, 3, 4, 6], 18)], |s, v| {
            s.graph.maxpool2d(v[0], 2, 2)
        }),
        op_case("adaptive_avg_pool", 9, vec![rt(&[2, 4, 3, 5], 19)], |s, v| {
            s.graph.global_avg_pool(v[0])
        }),
        op_case(
            "linear",
            10,
            vec![rt(&[3, 4, 1, 1], 20), rt(&[5, 4], 21), rt(&[5], 22)],
            |s, v| s.graph.linear(v[0], v[1], v[2]),
        ),
        op_case(
            "concat",
            11,
            vec![rt(&[2, 2, 3, 3], 23), rt(&[2, 3, 3, 3], 24), rt(&[2, 1, 3, 3], 25)],
            |s, v| s.graph.concat(v),
        ),
        op_case("add", 12, vec![rt(&[2, 3, 2, 2], 26), rt(&[2, 3, 2, 2], 27)], |s, v| {
            s.graph.add(v[0], v[1])
        }),
        op_case("mul", 13, vec![rt(&[2, 3, 2, 2], 28), rt(&[2, 3, 2, 2], 29)], |s, v| {
            s.graph.mul(v[0], v[1])
        }),
        op_case(
            "mul_channel_broadcast",
            14,
            vec![rt(&[2, 3, 4, 4], 30), rt(&[2, 1, 4, 4], 31)],
            |s, v| s.graph.mul_channel_broadcast(v[0], v[1]),
        ),
        op_case("scale", 15, vec![rt(&[2, 3, 2, 2], 32)], |s, v| {
            s.graph.scale(v[0], 0.4)
        }),
        op_case("upsample2x", 16, vec![rt(&[2, 2, 3, 4], 33)], |s, v| {
            s.graph.upsample2x(v[0])
        }),
        op_case("narrow", 17, vec![rt(&[2, 2, 4, 9], 34)], |s, v| {
            s.graph.narrow(v[0], 3, 2, 4)
        }),
        op_case("reshape", 18, vec![rt(&[2, 3, 2, 2], 35)], |s, v| {
            s.graph.reshape(v[0], &[2, 12])
        }),
        op_case("softmax", 19, vec![rt(&[3, 5], 36)], |s, v| s.graph.softmax(v[0])),
        op_case("cross_entropy", 20, vec![rt(&[4, 5], 37)], |s, v| {
            s.graph.cross_entropy(v[0], &[0, 4, 2, 2])
        }),
    ]
}

fn block_case<K, B, F>(name: &'static str, seed: u64, inputs: Vec<Tensor<f64>>, build: B, f: F) -> Case
where
    B: FnOnce(&mut Init<'_, f64>) -> Result<K>,
    F: Fn(&K, &mut Session<'_, f64>, &[Var]) -> Result<Vec<Var>>,
{
    let mut store = ParamStore::new();
    let mut rng = seeded_rng(seed);
    let block = match build(&mut Init::new(&mut store, &mut rng)) {
        Ok(b) => b,
        Err(e) => return Case { name, report: Err(e) },
    };
    let report = check(&mut store, &inputs, cfg(seed), |s, v| {
        let outs = f(&block, s, v)?;
        let mut total: Option<Var> = None;
        for (i, y) in outs.into_iter().enumerate() {
            let l = weighted_sum(s, y, seed.wrapping_add(i as u64 * 101))?;
            total = Some(match total {
                Some(t) => s.graph.add(t, l)?,
                None => l,
            });
        }
        Ok(total.expect("block returns at least one output"))
    });
    Case { name, report }
}

/// Cases for each composite block.
pub fn block_cases() -> Vec<Case> {
    vec![
        block_case(
            "conv_block",
            31,
            vec![rt(&[1, 2, 6, 6], 40)],
            |init| ConvBlock::new(init, "cb", 2, 3),
            |b, s, v| Ok(vec![b.forward(s, v[0])?]),
        ),
        block_case(
            "spatial_attention",
            32,
            vec![rt(&[2, 4, 5, 5], 41)],
            |init| SpatialAttention::new(init, "att", 4),
            |b, s, v| {
                let (y, a) = b.forward(s, v[0])?;
                Ok(vec![y, a])
            },
        ),
        block_case(
            "dsdf",
            33,
            vec![rt(&[1, 4, 8, 8], 42), rt(&[1, 8, 4, 4], 43)],
            |init| DsdfBlock::new(init, "dsdf", 4, 8, 2, DEFAULT_RESIDUAL_SCALE),
            |b, s, v| {
                let (lo, hi) = b.forward(s, v[0], v[1])?;
                Ok(vec![lo, hi])
            },
        ),
        block_case(
            "dpdfe",
            34,
            vec![rt(&[2, 3, 4, 4], 44), rt(&[2, 3, 4, 4], 45)],
            |init| DpdfeBlock::new(init, "dpdfe", 3, 2, DEFAULT_RESIDUAL_SCALE),
            |b, s, v| {
                let (p, q) = b.forward(s, v[0], v[1])?;
                Ok(vec![p, q])
            },
        ),
        block_case(
            "class_head",
            35,
            vec![rt(&[3, 4, 2, 3], 46)],
            |init| ClassHead::new(init, "head", 4, 5),
            |b, s, v| Ok(vec![b.forward(s, v[0])?]),
        ),
    ]
}

/// End-to-end check of each network at [`NetConfig::tiny`] with two writers:
/// summed cross-entropy of all heads on a batch of two images.
pub fn network_case(variant: Variant) -> Case {
    let name = match variant {
        Variant::SaNet => "tiny sa-net",
        Variant::Msrf => "tiny msrf",
        Variant::PatchNet => "tiny patchnet",
    };
    let config = NetConfig::tiny(variant, 2);
    let shape = [2, 1, config.input_height, config.input_width];
    let model = match Model::<f64>::new(config.clone(), 50 + variant as u64) {
        Ok(m) => m,
        Err(e) => return Case { name, report: Err(e) },
    };
    let Model { net, mut params, .. } = model;
    let noise = random_tensor(&shape, 60 + variant as u64, 1.0);
    let images = Tensor::from_fn(&shape, |i| 0.5 + 0.5 * noise.data()[i]);
    let report = check(&mut params, &[images], cfg(70 + variant as u64), |s, v| {
        let heads = net.forward(s, &config, v[0])?;
        summed_cross_entropy(s, &heads, &[0, 1])
    });
    Case { name, report }
}

pub fn network_cases() -> Vec<Case> {
    Variant::ALL.into_iter().map(network_case).collect()
}

/// Every case: ops, blocks, then networks.
pub fn all_cases() -> Vec<Case> {
    let mut v = op_cases();
    v.extend(block_cases());
    v.extend(network_cases());
    v
}
