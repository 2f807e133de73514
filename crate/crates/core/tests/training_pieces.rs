use penprint_core::cost::reference_gflops;
use penprint_core::metrics::{aggregate_pages, evaluate, Scored};
use penprint_core::nn::init::seeded_rng;
use penprint_core::nn::params::ParamKind;
use penprint_core::nn::Init;
use penprint_core::preprocess::{extract_patches, placement, preprocess, GrayImage};
use penprint_core::{analyze, Adam, Level, Model, NetConfig, ParamStore, Tensor, TrainConfig, Variant};
use proptest::prelude::*;

#[test]
fn adam_follows_textbook_recurrence_on_a_quadratic() {
    // f(p) = a/2 (p - c)^2 with L2 decay folded into the gradient.
    let (a, c, lr, wd) = (3.0, 0.7, 0.05, 0.01);
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(0);
    let id = Init::new(&mut store, &mut rng)
        .constant("p", &[1], -1.2, ParamKind::Trainable)
        .unwrap();
    let mut adam = Adam::new(&store, b1, b2, eps, wd);

    let (mut p, mut m, mut v) = (-1.2f64, 0.0f64, 0.0f64);
    for t in 1..=3 {
        let g = a * (p - c) + wd * p;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        p -= lr * m_hat / (v_hat.sqrt() + eps);

        store.zero_grad();
        let cur = store.value(id).data()[0];
        store.entries_mut()[id.index()].grad.data_mut()[0] = a * (cur - c);
        adam.step(&mut store, lr);
        let got = store.value(id).data()[0];
        assert!((got - p).abs() < 1e-10, "step {t}: {got} vs {p}");
    }
}

#[test]
fn learning_rate_halves_every_ten_epochs() {
    let cfg = TrainConfig::default();
    for epoch in 1..=50 {
        let want = 1e-4 * 0.5f64.powi(((epoch - 1) / 10) as i32);
        assert!((cfg.lr_at_epoch(epoch) - want).abs() < 1e-18, "epoch {epoch}");
    }
}

fn trainable_under(store: &ParamStore<f32>, prefix: &str) -> u64 {
    store
        .entries()
        .iter()
        .filter(|e| e.kind == ParamKind::Trainable && e.name.starts_with(prefix))
        .map(|e| e.value.len() as u64)
        .sum()
}

#[test]
fn cost_model_parameters_match_built_models() {
    for variant in Variant::ALL {
        for cfg in [NetConfig::tiny(variant, 6), NetConfig::new(variant, 100).quarter()] {
            let model = Model::<f32>::new(cfg.clone(), 0).unwrap();
            let report = analyze(&cfg).unwrap();
            assert_eq!(report.total_params, model.num_parameters() as u64, "{variant:?}");
            let prefixes: &[&str] = match variant {
                Variant::SaNet => &["stage1.", "stage2.", "stage3.", "stage4.", "head."],
                Variant::Msrf => &["encoder.", "fusion1.", "fusion2.", "heads."],
                Variant::PatchNet => &[
                    "patch0.",
                    "patch4.",
                    "exchange.stage1.",
                    "exchange.stage4.",
                    "global.",
                    "global_head.",
                ],
            };
            for p in prefixes {
                assert_eq!(
                    report.params_under(p),
                    trainable_under(&model.params, p),
                    "{variant:?} {p}"
                );
            }
        }
    }
}

#[test]
fn default_parameter_counts() {
    let counts: Vec<u64> = Variant::ALL
        .into_iter()
        .map(|v| analyze(&NetConfig::new(v, 100)).unwrap().total_params)
        .collect();
    let models: Vec<u64> = Variant::ALL
        .into_iter()
        .map(|v| Model::<f32>::new(NetConfig::new(v, 100), 0).unwrap().num_parameters() as u64)
        .collect();
    assert_eq!(counts, models);
}

#[test]
fn cost_analysis_is_pure() {
    let cfg = NetConfig::new(Variant::PatchNet, 100);
    assert_eq!(analyze(&cfg).unwrap(), analyze(&cfg).unwrap());
}

#[test]
fn flops_near_reference_for_sa_net_and_patchnet() {
    for variant in [Variant::SaNet, Variant::PatchNet] {
        let got = analyze(&NetConfig::new(variant, 100)).unwrap().gflops();
        let want = reference_gflops(variant).unwrap();
        assert!((got / want - 1.0).abs() <= 0.15, "{variant:?}: {got:.3} vs {want}");
    }
}

#[test]
fn flop_rows_sum_to_total() {
    let r = analyze(&NetConfig::new(Variant::Msrf, 100)).unwrap();
    assert_eq!(r.rows.iter().map(|x| x.flops).sum::<u64>(), r.total_flops);
    assert!(r.rows.iter().any(|x| x.name.starts_with("fusion2.dsdf34")));
}

#[test]
fn patches_are_exact_slices() {
    let word = Tensor::<f32>::from_fn(&[1, 64, 128], |i| i as f32);
    let patches = extract_patches(&word).unwrap();
    assert_eq!(patches.len(), 5);
    for (p, patch) in patches.iter().enumerate() {
        assert_eq!(patch.shape(), &[1, 64, 64]);
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(patch.data()[y * 64 + x], word.data()[y * 128 + 16 * p + x]);
            }
        }
    }
    // The outermost patches tile the word without overlap.
    let mut rebuilt = vec![0.0f32; 64 * 128];
    for y in 0..64 {
        rebuilt[y * 128..y * 128 + 64].copy_from_slice(&patches[0].data()[y * 64..(y + 1) * 64]);
        rebuilt[y * 128 + 64..(y + 1) * 128].copy_from_slice(&patches[4].data()[y * 64..(y + 1) * 64]);
    }
    assert_eq!(rebuilt, word.data());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn preprocess_keeps_aspect_and_pads_white(h in 1usize..200, w in 1usize..400) {
        let t = preprocess(&GrayImage::filled(h, w, 0.0), 64, 128).unwrap();
        let s = (64.0 / h as f64).min(128.0 / w as f64);
        let (ch, cw) = ((s * h as f64).round() as usize, (s * w as f64).round() as usize);
        let pl = placement(h, w, 64, 128);
        prop_assert_eq!((pl.height, pl.width), (ch.max(1), cw.max(1)));
        for y in 0..64 {
            for x in 0..128 {
                let inside = (pl.top..pl.top + pl.height).contains(&y) && (pl.left..pl.left + pl.width).contains(&x);
                prop_assert_eq!(t.data()[y * 128 + x], if inside { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn page_score_ignores_word_order(seed in any::<u64>(), n in 1usize..12) {
        use rand::{Rng, SeedableRng, seq::SliceRandom};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<Scored> = (0..n)
            .map(|i| {
                let raw: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
                let z: f64 = raw.iter().sum();
                Scored { key: format!("w{i}"), label: 3, probs: raw.iter().map(|r| r / z).collect() }
            })
            .collect();
        let base = aggregate_pages(words.iter().map(|w| ("page", w))).unwrap();
        let mut shuffled = words.clone();
        shuffled.shuffle(&mut rng);
        let again = aggregate_pages(shuffled.iter().map(|w| ("page", w))).unwrap();
        prop_assert_eq!(&base, &again);
        prop_assert_eq!(evaluate(Level::Page, &base), evaluate(Level::Page, &again));
    }
}
