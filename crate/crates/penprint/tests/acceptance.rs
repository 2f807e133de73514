//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. The desk-scale learning check trains all three networks
//! at quarter width and dominates the runtime.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use penprint::checkpoint;
use penprint::dataset::{load_for, of_split, Sample};
use penprint::eval::{evaluate_both, score_pages, score_words};
use penprint::manifest::Split;
use penprint::synth::{generate, SynthConfig};
use penprint::train::train;
use penprint_core::arch::networks::Network;
use penprint_core::cost::reference_gflops;
use penprint_core::gradcheck::cases::all_cases;
use penprint_core::gradcheck::{random_tensor, DEFAULT_PROBES};
use penprint_core::metrics::Scored;
use penprint_core::nn::blocks::DEFAULT_RESIDUAL_SCALE;
use penprint_core::nn::init::seeded_rng;
use penprint_core::nn::{DpdfeBlock, DsdfBlock, Init, SpatialAttention};
use penprint_core::preprocess::{extract_patches, preprocess, GrayImage};
use penprint_core::{analyze, Mode, Model, NetConfig, ParamStore, Session, Tensor, TrainConfig, Variant};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let cases = all_cases();
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    for c in &cases {
        let r = c.report.as_ref().map_err(|e| format!("{}: {e}", c.name))?;
        ensure(r.probes.len() >= DEFAULT_PROBES, || {
            format!("{}: {} probes", c.name, r.probes.len())
        })?;
        ensure(r.passes(1e-4), || format!("{}: worst {:?}", c.name, r.worst()))?;
        worst = worst.max(r.max_rel_err());
    }
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} cases, max rel err {worst:.2e}, {:.1}s",
        cases.len(),
        elapsed.as_secs_f64()
    ))
}

fn residual_identities() -> Outcome {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(1);
    let mut init = Init::new(&mut store, &mut rng);
    let dsdf = DsdfBlock::new(&mut init, "dsdf", 4, 8, 3, DEFAULT_RESIDUAL_SCALE).map_err(|e| e.to_string())?;
    let dpdfe = DpdfeBlock::new(&mut init, "dpdfe", 4, 3, DEFAULT_RESIDUAL_SCALE).map_err(|e| e.to_string())?;
    dsdf.zero_dense_weights(&mut store);
    dpdfe.zero_dense_weights(&mut store);
    let (lo, hi) = (
        random_tensor(&[2, 4, 8, 8], 2, 1.0),
        random_tensor(&[2, 8, 4, 4], 3, 1.0),
    );
    let q = random_tensor(&[2, 4, 8, 8], 4, 1.0);
    let mut s = Session::new(&mut store, Mode::Train);
    let (l, h, qv) = (s.input(lo.clone()), s.input(hi.clone()), s.input(q.clone()));
    let (yl, yh) = dsdf.forward(&mut s, l, h).map_err(|e| e.to_string())?;
    ensure(s.value(yl) == &lo && s.value(yh) == &hi, || {
        "DSDF not an identity".into()
    })?;
    let (yp, yq) = dpdfe.forward(&mut s, l, qv).map_err(|e| e.to_string())?;
    ensure(s.value(yp) == &lo && s.value(yq) == &q, || {
        "DPDFE not an identity".into()
    })?;

    // MSRF: every head reads the plain encoder's deepest scale.
    let cfg = NetConfig::tiny(Variant::Msrf, 4);
    let mut model = Model::<f32>::new(cfg.clone(), 5).map_err(|e| e.to_string())?;
    model.zero_fusion_weights();
    let Network::Msrf(net) = model.net.clone() else {
        unreachable!()
    };
    let x = images(&cfg, 2, 6);
    let mut s = Session::new(&mut model.params, Mode::Eval);
    let xv = s.input(x);
    let t = net.trace(&mut s, xv).map_err(|e| e.to_string())?;
    for &d in &t.deepest {
        ensure(s.value(d) == s.value(t.scales[3]), || {
            "MSRF head input differs from encoder".into()
        })?;
    }

    // PatchNet: each stream equals its patch pushed through blocks and pools alone.
    let cfg = NetConfig::tiny(Variant::PatchNet, 4);
    let mut model = Model::<f32>::new(cfg.clone(), 7).map_err(|e| e.to_string())?;
    model.zero_fusion_weights();
    let Network::PatchNet(net) = model.net.clone() else {
        unreachable!()
    };
    let mut s = Session::new(&mut model.params, Mode::Eval);
    let xv = s.input(images(&cfg, 2, 8));
    let t = net.trace(&mut s, xv).map_err(|e| e.to_string())?;
    for p in 0..5 {
        let mut h = s
            .graph
            .narrow(xv, 3, net.offsets[p], cfg.input_height)
            .map_err(|e| e.to_string())?;
        for (si, block) in net.streams[p].iter().enumerate() {
            h = block.forward(&mut s, h).map_err(|e| e.to_string())?;
            h = s.graph.maxpool2d(h, 2, 2).map_err(|e| e.to_string())?;
            ensure(s.value(t.stream_stages[p][si]) == s.value(h), || {
                format!("patch {p} stage {}", si + 1)
            })?;
        }
    }
    Ok("DSDF, DPDFE, MSRF and PatchNet reduce exactly".into())
}

fn attention() -> Outcome {
    let mut lowest: f64 = 1.0;
    let mut highest: f64 = 0.0;
    for seed in 0..100u64 {
        let mut store = ParamStore::<f64>::new();
        let mut rng = seeded_rng(seed);
        let att = SpatialAttention::new(&mut Init::new(&mut store, &mut rng), "att", 8).map_err(|e| e.to_string())?;
        let x = random_tensor(&[2, 8, 6, 10], seed + 1000, 0.5 + (seed % 7) as f64);
        let mut s = Session::new(&mut store, Mode::Train);
        let xv = s.input(x.clone());
        let (y, a) = att.forward(&mut s, xv).map_err(|e| e.to_string())?;
        for &v in s.value(a).data() {
            ensure(v > 0.0 && v < 1.0, || format!("seed {seed}: attention {v}"))?;
            lowest = lowest.min(v);
            highest = highest.max(v);
        }
        for (g, v) in s.value(y).data().iter().zip(x.data()) {
            ensure(g.abs() <= v.abs(), || format!("seed {seed}: |{g}| > |{v}|"))?;
        }
    }
    Ok(format!("100 inputs, min a {lowest:.2e}, min 1-a {:.2e}", 1.0 - highest))
}

fn images(cfg: &NetConfig, n: usize, seed: u64) -> Tensor<f32> {
    let noise = random_tensor(&[n, 1, cfg.input_height, cfg.input_width], seed, 0.5);
    Tensor::from_fn(noise.shape(), |i| 0.5 + noise.data()[i] as f32)
}

fn equation_fidelity() -> Outcome {
    let mut worst = 0.0f64;
    for variant in Variant::ALL {
        let cfg = NetConfig::tiny(variant, 5);
        let mut model = Model::<f32>::new(cfg.clone(), 21).map_err(|e| e.to_string())?;
        let x = images(&cfg, 3, 22);
        let heads = model.forward(&x, Mode::Eval).map_err(|e| e.to_string())?;
        let preds = model.predict(&x).map_err(|e| e.to_string())?;
        for (n, pred) in preds.iter().enumerate() {
            let mut mean = vec![0.0f64; 5];
            for h in &heads {
                let row: Vec<f64> = h.data()[n * 5..(n + 1) * 5].iter().map(|&v| v as f64).collect();
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (acc, v) in mean.iter_mut().zip(&e) {
                    *acc += v / z / heads.len() as f64;
                }
            }
            for (a, b) in pred.probs.iter().zip(&mean) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(worst <= 1e-6, || format!("word mean off by {worst:e}"))?;

    // Page level: mean over word vectors, independent of word order.
    let cfg = NetConfig::tiny(Variant::SaNet, 3);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (_, records) = generate(
        &SynthConfig {
            num_writers: 3,
            words_per_page: 4,
            pages_per_writer: 2,
            seed: 12,
        },
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let samples = load_for(&records, &cfg).map_err(|e| e.to_string())?;
    let all: Vec<&Sample> = samples.iter().collect();
    let mut model = Model::<f32>::new(cfg, 23).map_err(|e| e.to_string())?;
    let words = score_words(&mut model, &all).map_err(|e| e.to_string())?;
    let pages = score_pages(&all, &words).map_err(|e| e.to_string())?;
    let mut page_err = 0.0f64;
    for page in &pages {
        let members: Vec<&Scored> = all
            .iter()
            .zip(&words)
            .filter(|(s, _)| s.record.page_id == page.key)
            .map(|(_, w)| w)
            .collect();
        for (j, &p) in page.probs.iter().enumerate() {
            let mean = members.iter().map(|w| w.probs[j]).sum::<f64>() / members.len() as f64;
            page_err = page_err.max((p - mean).abs());
        }
    }
    ensure(page_err <= 1e-6, || format!("page mean off by {page_err:e}"))?;
    let rev: Vec<&Sample> = all.iter().rev().copied().collect();
    let rev_words: Vec<Scored> = words.iter().rev().cloned().collect();
    let again = score_pages(&rev, &rev_words).map_err(|e| e.to_string())?;
    ensure(again == pages, || "page scores depend on word order".into())?;
    Ok(format!(
        "word max err {worst:.1e}, page max err {page_err:.1e}, {} pages order-invariant",
        pages.len()
    ))
}

fn patch_geometry() -> Outcome {
    let word = Tensor::<f32>::from_fn(&[1, 64, 128], |i| i as f32);
    let patches = extract_patches(&word).map_err(|e| e.to_string())?;
    ensure(patches.len() == 5, || format!("{} patches", patches.len()))?;
    for (p, off) in [0usize, 16, 32, 48, 64].into_iter().enumerate() {
        for y in 0..64 {
            let want = &word.data()[y * 128 + off..y * 128 + off + 64];
            ensure(&patches[p].data()[y * 64..(y + 1) * 64] == want, || {
                format!("patch {p} row {y}")
            })?;
        }
    }
    let t = preprocess(&GrayImage::filled(64, 64, 0.0), 64, 128).map_err(|e| e.to_string())?;
    for y in 0..64 {
        for x in 0..128 {
            let want = if (32..96).contains(&x) { 0.0 } else { 1.0 };
            ensure(t.data()[y * 128 + x] == want, || format!("pixel ({y}, {x})"))?;
        }
    }
    Ok("offsets 0,16,32,48,64 exact; 64x64 padded white at columns 0..32 and 96..128".into())
}

fn lr_trajectory() -> Outcome {
    let cfg = NetConfig::tiny(Variant::SaNet, 2);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (_, records) = generate(
        &SynthConfig {
            num_writers: 2,
            words_per_page: 2,
            pages_per_writer: 2,
            seed: 1,
        },
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let samples = load_for(&records, &cfg).map_err(|e| e.to_string())?;
    let train_set = of_split(&samples, Split::Train);
    let mut model = Model::<f32>::new(cfg, 0).map_err(|e| e.to_string())?;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = train(
        &mut model,
        &train_set,
        &TrainConfig::default(),
        Some(out.path()),
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    let want = [1e-4, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6];
    ensure(log.len() == 50, || format!("{} epochs", log.len()))?;
    for e in &log {
        ensure(e.lr == want[(e.epoch - 1) / 10], || {
            format!("epoch {}: lr {}", e.epoch, e.lr)
        })?;
    }
    // The written loss log carries the same trajectory.
    let text = std::fs::read_to_string(out.path().join("loss.csv")).map_err(|e| e.to_string())?;
    for (line, e) in text.lines().skip(1).zip(&log) {
        let lr: f64 = line
            .split(',')
            .nth(2)
            .and_then(|v| v.parse().ok())
            .ok_or("bad log line")?;
        ensure(lr == e.lr, || format!("logged lr {lr} at epoch {}", e.epoch))?;
    }
    Ok("bands 1e-4, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6 over epochs 1-50".into())
}

fn cost_model() -> Outcome {
    let mut notes = Vec::new();
    for variant in Variant::ALL {
        for cfg in [NetConfig::new(variant, 100), NetConfig::tiny(variant, 2)] {
            let report = analyze(&cfg).map_err(|e| e.to_string())?;
            let built = Model::<f32>::new(cfg.clone(), 0)
                .map_err(|e| e.to_string())?
                .num_parameters() as u64;
            ensure(report.total_params == built, || {
                format!("{variant:?}: {} vs {built}", report.total_params)
            })?;
        }
        let g = analyze(&NetConfig::new(variant, 100))
            .map_err(|e| e.to_string())?
            .gflops();
        notes.push(format!("{variant} {g:.2}G"));
    }
    for variant in [Variant::SaNet, Variant::PatchNet] {
        let g = analyze(&NetConfig::new(variant, 100))
            .map_err(|e| e.to_string())?
            .gflops();
        let r = reference_gflops(variant).ok_or("no reference")?;
        ensure((g / r - 1.0).abs() <= 0.15, || format!("{variant}: {g:.3}G vs {r}G"))?;
    }
    Ok(format!(
        "params exact; {} (published 4.10G / 7.65G for SA-Net / PatchNet; name-to-number mapping is ambiguous)",
        notes.join(", ")
    ))
}

fn determinism() -> Outcome {
    let net = NetConfig::tiny(Variant::Msrf, 3);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (_, records) = generate(
        &SynthConfig {
            num_writers: 3,
            words_per_page: 4,
            pages_per_writer: 2,
            seed: 5,
        },
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let samples = load_for(&records, &net).map_err(|e| e.to_string())?;
    let (train_set, test_set) = (of_split(&samples, Split::Train), of_split(&samples, Split::Test));
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 13,
        ..TrainConfig::default()
    };
    let run = || -> Result<_, String> {
        let mut m = Model::<f32>::new(net.clone(), cfg.seed).map_err(|e| e.to_string())?;
        train(&mut m, &train_set, &cfg, None, |_| {}).map_err(|e| e.to_string())?;
        let reports = evaluate_both(&mut m, &test_set).map_err(|e| e.to_string())?;
        Ok((m, reports))
    };
    let (model, (wa, pa)) = run()?;
    let (_, (wb, pb)) = run()?;
    ensure(
        wa.top1.to_bits() == wb.top1.to_bits() && wa.top5.to_bits() == wb.top5.to_bits(),
        || "word reports differ".into(),
    )?;
    ensure(
        pa.top1.to_bits() == pb.top1.to_bits() && pa.top5.to_bits() == pb.top5.to_bits(),
        || "page reports differ".into(),
    )?;

    let header = checkpoint::header_for(&model, &cfg, 3);
    let bytes = checkpoint::encode(&model, &header);
    let (mut restored, h2) = checkpoint::decode(&bytes)?;
    ensure(h2 == header, || "header changed".into())?;
    ensure(checkpoint::encode(&restored, &h2) == bytes, || {
        "re-encoding differs".into()
    })?;
    for (a, b) in model.params.entries().iter().zip(restored.params.entries()) {
        let same = a
            .value
            .data()
            .iter()
            .zip(b.value.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(a.name == b.name && same, || format!("{} differs", a.name))?;
    }
    let (wr, _) = evaluate_both(&mut restored, &test_set).map_err(|e| e.to_string())?;
    ensure(wr == wa, || "restored model evaluates differently".into())?;
    Ok(format!(
        "word top1 {:.4} / top5 {:.4} twice; {} checkpoint bytes round-trip",
        wa.top1,
        wa.top5,
        bytes.len()
    ))
}

fn desk_scale() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (_, records) = generate(&SynthConfig::default(), dir.path()).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for variant in Variant::ALL {
        let start = Instant::now();
        let net = NetConfig::new(variant, 10).quarter();
        let samples = load_for(&records, &net).map_err(|e| e.to_string())?;
        let (train_set, test_set) = (of_split(&samples, Split::Train), of_split(&samples, Split::Test));
        let mut model = Model::<f32>::new(net, 0).map_err(|e| e.to_string())?;
        let cfg = TrainConfig::default();
        train(&mut model, &train_set, &cfg, None, |_| {}).map_err(|e| e.to_string())?;
        let (train_word, _) = evaluate_both(&mut model, &train_set).map_err(|e| e.to_string())?;
        let (word, page) = evaluate_both(&mut model, &test_set).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let line = format!(
            "{variant}: train {:.3}, test word {:.3}, test page {:.3}, {:.1} min",
            train_word.top1,
            word.top1,
            page.top1,
            elapsed.as_secs_f64() / 60.0
        );
        eprintln!("  {line}");
        if train_word.top1 < 0.95 || word.top1 < 0.30 || page.top1 < word.top1 || elapsed >= Duration::from_secs(1800) {
            failures.push(line.clone());
        }
        lines.push(line);
    }
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradients),
        ("residual identities", residual_identities),
        ("attention invariants", attention),
        ("equation fidelity", equation_fidelity),
        ("patch geometry", patch_geometry),
        ("hyperparameter fidelity", lr_trajectory),
        ("cost model", cost_model),
        ("determinism", determinism),
        ("desk-scale learning", desk_scale),
    ];
    let only = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, f) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
