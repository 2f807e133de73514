use penprint_core::arch::networks::Network;
use penprint_core::gradcheck::random_tensor;
use penprint_core::predict::WordPrediction;
use penprint_core::{Adam, Mode, Model, NetConfig, ParamStore, Session, Tensor, Variant};

fn images(cfg: &NetConfig, n: usize, seed: u64) -> Tensor<f32> {
    let noise = random_tensor(&[n, 1, cfg.input_height, cfg.input_width], seed, 0.5);
    Tensor::from_fn(noise.shape(), |i| 0.5 + noise.data()[i] as f32)
}

#[test]
fn sa_net_stage_shapes_at_default_widths() {
    let cfg = NetConfig::new(Variant::SaNet, 7);
    let mut model = Model::<f32>::new(cfg.clone(), 1).unwrap();
    let x = images(&cfg, 1, 2);
    let Network::SaNet(net) = &model.net else {
        unreachable!()
    };
    let net = net.clone();
    let mut s = Session::new(&mut model.params, Mode::Eval);
    let xv = s.input(x);
    let t = net.trace(&mut s, xv).unwrap();
    let expect = [[64, 32, 64], [128, 16, 32], [256, 8, 16], [512, 4, 8]];
    for (i, (&v, e)) in t.stages.iter().zip(expect).enumerate() {
        assert_eq!(s.value(v).shape(), &[1, e[0], e[1], e[2]], "stage {}", i + 1);
        let a = s.value(t.attention[i]).shape();
        assert_eq!(a, &[1, 1, 2 * e[1], 2 * e[2]]);
    }
    assert_eq!(s.value(t.logits).shape(), &[1, 7]);
}

#[test]
fn head_counts_and_shapes() {
    for variant in Variant::ALL {
        let cfg = NetConfig::tiny(variant, 3);
        let mut model = Model::<f32>::new(cfg.clone(), 3).unwrap();
        let heads = model.forward(&images(&cfg, 2, 4), Mode::Eval).unwrap();
        assert_eq!(heads.len(), cfg.num_heads());
        assert_eq!(heads.len(), [1, 3, 6][variant as usize]);
        for h in heads {
            assert_eq!(h.shape(), &[2, 3]);
        }
    }
}

#[test]
fn wrong_input_size_rejected() {
    let cfg = NetConfig::tiny(Variant::SaNet, 3);
    let mut model = Model::<f32>::new(cfg, 3).unwrap();
    assert!(model.forward(&Tensor::full(&[1, 1, 16, 48], 1.0), Mode::Eval).is_err());
}

#[test]
fn msrf_with_zero_fusion_feeds_encoder_output_to_every_head() {
    let cfg = NetConfig::tiny(Variant::Msrf, 4);
    let mut model = Model::<f32>::new(cfg.clone(), 5).unwrap();
    model.zero_fusion_weights();
    let Network::Msrf(net) = &model.net else { unreachable!() };
    let net = net.clone();
    let mut s = Session::new(&mut model.params, Mode::Eval);
    let xv = s.input(images(&cfg, 2, 6));
    let t = net.trace(&mut s, xv).unwrap();
    assert_eq!(t.deepest.len(), 3);
    let s4 = s.value(t.scales[3]).clone();
    assert_eq!(s4.shape(), &[2, 16, 1, 2]);
    for &d in &t.deepest {
        assert_eq!(s.value(d), &s4);
    }
}

#[test]
fn patchnet_with_zero_fusion_matches_plain_streams() {
    let cfg = NetConfig::tiny(Variant::PatchNet, 4);
    let mut model = Model::<f32>::new(cfg.clone(), 7).unwrap();
    model.zero_fusion_weights();
    let Network::PatchNet(net) = &model.net else {
        unreachable!()
    };
    let net = net.clone();
    let x = images(&cfg, 2, 8);
    let mut s = Session::new(&mut model.params, Mode::Eval);
    let xv = s.input(x);
    let t = net.trace(&mut s, xv).unwrap();
    assert_eq!(t.logits.len(), 6);
    assert_eq!(net.offsets, [0, 4, 8, 12, 16]);
    let side = cfg.input_height;
    for p in 0..5 {
        let mut h = s.graph.narrow(xv, 3, net.offsets[p], side).unwrap();
        for (si, block) in net.streams[p].iter().enumerate() {
            h = block.forward(&mut s, h).unwrap();
            h = s.graph.maxpool2d(h, 2, 2).unwrap();
            let got = t.stream_stages[p][si];
            let spatial = side >> (si + 1);
            assert_eq!(s.value(got).shape(), &[2, cfg.patch_widths()[si], spatial, spatial]);
            assert_eq!(s.value(got), s.value(h), "patch {p} stage {}", si + 1);
        }
    }
}

#[test]
fn patchnet_default_stage_sizes_halve_from_64() {
    let cfg = NetConfig::new(Variant::PatchNet, 2).quarter();
    let mut model = Model::<f32>::new(cfg.clone(), 9).unwrap();
    let Network::PatchNet(net) = &model.net else {
        unreachable!()
    };
    let net = net.clone();
    let mut s = Session::new(&mut model.params, Mode::Eval);
    let xv = s.input(images(&cfg, 1, 10));
    let t = net.trace(&mut s, xv).unwrap();
    assert_eq!(net.offsets, [0, 16, 32, 48, 64]);
    for p in 0..5 {
        assert_eq!(s.value(t.patches[p]).shape(), &[1, 1, 64, 64]);
        for si in 0..4 {
            let side = 64 >> (si + 1);
            assert_eq!(&s.value(t.stream_stages[p][si]).shape()[2..], &[side, side]);
        }
    }
}

#[test]
fn prediction_is_invariant_to_head_order() {
    let cfg = NetConfig::tiny(Variant::PatchNet, 5);
    let mut model = Model::<f64>::new(cfg.clone(), 11).unwrap();
    let heads = model.forward(&images(&cfg, 1, 12).cast(), Mode::Eval).unwrap();
    let logits: Vec<Vec<f64>> = heads.iter().map(|h| h.data().to_vec()).collect();
    let base = WordPrediction::from_head_logits(&logits);
    let mut rev = logits.clone();
    rev.reverse();
    let mut rot = logits.clone();
    rot.rotate_left(2);
    for perm in [rev, rot] {
        assert_eq!(WordPrediction::from_head_logits(&perm).probs, base.probs);
    }
    let sum: f64 = base.probs.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn forward_is_deterministic() {
    for variant in Variant::ALL {
        let cfg = NetConfig::tiny(variant, 3);
        let x = images(&cfg, 2, 13);
        let run = || {
            let mut m = Model::<f32>::new(cfg.clone(), 14).unwrap();
            let train = m.train_batch(&x, &[0, 2]).unwrap();
            let grads: Vec<f32> = m.params.entries().iter().flat_map(|e| e.grad.data().to_vec()).collect();
            (m.forward(&x, Mode::Eval).unwrap(), train.loss, grads)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        assert_eq!(a.2, b.2);
    }
}

fn adam_step(model: &mut Model<f64>, x: &Tensor<f64>, labels: &[usize], lr: f64) -> (f64, f64) {
    let before = model.eval_loss(x, labels, Mode::Train).unwrap();
    let mut adam = Adam::new(&model.params, 0.9, 0.999, 1e-8, 0.0);
    model.params.zero_grad();
    model.train_batch(x, labels).unwrap();
    adam.step(&mut model.params, lr);
    (before, model.eval_loss(x, labels, Mode::Train).unwrap())
}

#[test]
fn one_adam_step_lowers_the_batch_loss() {
    for variant in Variant::ALL {
        let mut failures = 0;
        for seed in 0..5 {
            let cfg = NetConfig::tiny(variant, 4);
            let mut model = Model::<f64>::new(cfg.clone(), 100 + seed).unwrap();
            let x = images(&cfg, 4, 200 + seed).cast();
            let (before, after) = adam_step(&mut model, &x, &[0, 1, 2, 3], 1e-4);
            failures += (after >= before) as usize;
        }
        assert!(failures <= 1, "{variant:?}: {failures} of 5 seeds did not improve");
    }
}

#[test]
fn tiny_step_never_raises_loss_noticeably() {
    for variant in Variant::ALL {
        let cfg = NetConfig::tiny(variant, 4);
        let mut model = Model::<f64>::new(cfg.clone(), 300).unwrap();
        let x = images(&cfg, 4, 301).cast();
        let (before, after) = adam_step(&mut model, &x, &[3, 2, 1, 0], 1e-6);
        assert!(after - before <= 1e-3, "{variant:?}: {before} -> {after}");
    }
}

#[test]
fn eval_loss_leaves_parameters_untouched() {
    let cfg = NetConfig::tiny(Variant::SaNet, 2);
    let mut model = Model::<f32>::new(cfg.clone(), 15).unwrap();
    let snapshot: ParamStore<f32> = model.params.clone();
    model.eval_loss(&images(&cfg, 2, 16), &[0, 1], Mode::Train).unwrap();
    for (a, b) in snapshot.entries().iter().zip(model.params.entries()) {
        assert_eq!(a.value, b.value, "{}", a.name);
    }
}
