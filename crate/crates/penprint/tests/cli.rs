use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn penprint(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penprint"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PENPRINT_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TRAIN_FAST: &[&str] = &[
    "--arch",
    "sa-net",
    "--widths",
    "4,8,8,8",
    "--epochs",
    "2",
    "--batch-size",
    "4",
];

fn corpus(dir: &Path) -> String {
    let out = dir.join("corpus");
    let o = penprint(
        &[
            "gen-synth",
            "--out",
            out.to_str().unwrap(),
            "--writers",
            "3",
            "--words",
            "3",
            "--seed",
            "4",
        ],
        dir,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out.join("manifest.csv").to_str().unwrap().to_owned()
}

fn train_into(dir: &Path, manifest: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--manifest", manifest, "--out", out];
    args.extend_from_slice(TRAIN_FAST);
    args.extend_from_slice(extra);
    penprint(&args, dir)
}

#[test]
fn flops_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = penprint(&["flops", "--arch", "sa-net", "--writers", "105"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("stage1"), "{text}");
    assert!(text.contains("published figure"));
}

#[test]
fn flops_csv_totals_match_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = penprint(&["flops", "--arch", "patchnet", "--csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("layer,kind,channels,height,width,params,flops"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let (total, body) = rows.split_last().unwrap();
    assert_eq!(total[0], "total");
    let col = |i: usize| body.iter().map(|r| r[i].parse::<u64>().unwrap()).sum::<u64>();
    assert_eq!(col(5), total[5].parse::<u64>().unwrap());
    assert_eq!(col(6), total[6].parse::<u64>().unwrap());
}

#[test]
fn missing_manifest_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = penprint(&["train", "--manifest", "nowhere/manifest.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/manifest.csv"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = penprint(&["flops", "--frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--frobnicate"));
}

#[test]
fn unknown_arch_and_bad_config_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        penprint(&["flops", "--arch", "resnet"], dir.path()).status.code(),
        Some(1)
    );
    fs::write(dir.path().join("bad.toml"), "colour = 3\n").unwrap();
    let o = penprint(&["--config", "bad.toml", "flops"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = penprint(&["--config", "absent.toml", "flops"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.toml"));
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    let o = penprint(
        &["eval", "--checkpoint", "junk.ckpt", "--manifest", &manifest],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn train_eval_predict_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let o = train_into(dir.path(), &manifest, "run", &["--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["loss.csv", "epoch-001.ckpt", "epoch-002.ckpt", "model.ckpt"] {
        assert!(run.join(f).is_file(), "{f}");
    }

    let o = penprint(
        &[
            "eval",
            "--checkpoint",
            "run/model.ckpt",
            "--manifest",
            &manifest,
            "--level",
            "page",
            "--json",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("level: page"));
    assert!(text.contains("items: 3"));
    assert!(text.contains("top1: ") && text.contains("top5: "));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["top5"], 1.0);

    let image = fs::read_dir(dir.path().join("corpus/images"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let o = penprint(
        &[
            "predict",
            "--checkpoint",
            "run/model.ckpt",
            "--image",
            image.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rank,writer,probability");
    // Three writers, so at most three ranks are printed.
    assert_eq!(lines.len(), 4);
    let total: f64 = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-5);
}

#[test]
fn fixed_seed_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    for out in ["a", "b"] {
        let o = train_into(dir.path(), &manifest, out, &["--seed", "11"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["loss.csv", "epoch-001.ckpt", "model.ckpt"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    fs::write(
        dir.path().join("run.toml"),
        "arch = \"sa-net\"\nepochs = 1\nout_dir = \"from_config\"\nseed = 2\nchannel_widths = [4, 8, 8, 8]\n",
    )
    .unwrap();
    let o = penprint(&["--config", "run.toml", "train", "--manifest", &manifest], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = fs::read_to_string(dir.path().join("from_config/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let o = penprint(
        &[
            "--config",
            "run.toml",
            "train",
            "--manifest",
            &manifest,
            "--out",
            "flag",
            "--epochs",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = fs::read_to_string(dir.path().join("flag/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_penprint"))
        .args(["gen-synth", "--writers", "2", "--words", "1"])
        .current_dir(dir.path())
        .env("PENPRINT_OUT", "envdir")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("envdir/manifest.csv").is_file());

    let o = penprint(&["gen-synth", "--writers", "2", "--words", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("runs/manifest.csv").is_file());
}
