//! `penprint` command line.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, missing inputs, invalid
//! configuration), 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use penprint_core::cost::{analyze, reference_gflops};
use penprint_core::predict::ranking;
use penprint_core::preprocess::preprocess;
use penprint_core::{EvalReport, Level, Model};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::{load_for, of_split};
use crate::error::{io_err, Error};
use crate::eval::evaluate_level;
use crate::image_io::read_png;
use crate::manifest::{load_manifest, num_writers, Split};
use crate::synth;
use crate::train::{train, LOG_HEADER};

#[derive(Debug, Parser)]
#[command(name = "penprint", version, about = "Writer identification from word images")]
struct Cli {
    /// Flat TOML config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network on the train split of a manifest.
    Train(TrainArgs),
    /// Top-1/Top-5 of a checkpoint on one split.
    Eval(EvalArgs),
    /// Five most probable writers for one image.
    Predict(PredictArgs),
    /// Per-layer parameter and FLOP counts.
    Flops(FlopsArgs),
    /// Write a synthetic corpus and its manifest.
    GenSynth(SynthArgs),
}

#[derive(Debug, Default, Args)]
struct NetArgs {
    /// sa-net, msrf or patchnet.
    #[arg(long)]
    arch: Option<String>,
    /// Four comma-separated stage widths.
    #[arg(long, value_parser = parse_widths)]
    widths: Option<[usize; 4]>,
    /// Divide widths and growth by four.
    #[arg(long)]
    quarter: bool,
    #[arg(long)]
    growth: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (default: $PENPRINT_OUT, then `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Word,
    Page,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    image: PathBuf,
}

#[derive(Debug, Args)]
struct FlopsArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    writers: Option<usize>,
    /// Comma-separated rows instead of a table.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    writers: Option<usize>,
    #[arg(long)]
    words: Option<usize>,
    #[arg(long)]
    pages: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

impl NetArgs {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            arch: self.arch.clone(),
            channel_widths: self.widths,
            quarter: self.quarter.then_some(true),
            growth: self.growth,
            ..RunConfig::default()
        }
    }
}

fn parse_widths(s: &str) -> Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<usize>| format!("expected 4 widths, got {}", v.len()))
}

fn existing(path: Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    let p = path.ok_or_else(|| usage(format!("no {what} given (use --{what})")))?;
    if !p.is_file() {
        return Err(usage(format!("{what} not found: {}", p.display())));
    }
    Ok(p)
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) if !p.is_file() => return Err(usage(format!("config not found: {}", p.display()))),
        Some(p) => RunConfig::load(p).map_err(usage)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Train(a) => cmd_train(file, a),
        Command::Eval(a) => cmd_eval(file, a),
        Command::Predict(a) => cmd_predict(file, a),
        Command::Flops(a) => cmd_flops(file, a),
        Command::GenSynth(a) => cmd_synth(file, a),
    }
}

fn cmd_train(file: RunConfig, a: TrainArgs) -> Outcome {
    let cfg = file.overlay(RunConfig {
        manifest: a.manifest,
        out_dir: a.out,
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        weight_decay: a.weight_decay,
        seed: a.seed,
        ..a.net.overrides()
    });
    let manifest = existing(cfg.manifest.clone(), "manifest")?;
    let train_cfg = cfg.train_config().map_err(usage)?;
    cfg.variant().map_err(usage)?;
    let records = load_manifest(&manifest)?;
    let net = cfg.net_config(num_writers(&records)).map_err(usage)?;
    let out = cfg.out_dir();
    println!(
        "training {} on {} ({} writers, {} records) -> {}",
        net.variant,
        manifest.display(),
        net.num_writers,
        records.len(),
        out.display()
    );
    let samples = load_for(&records, &net)?;
    let train_set = of_split(&samples, Split::Train);
    let mut model = Model::<f32>::new(net, train_cfg.seed).map_err(Error::from)?;
    println!("{} parameters", model.num_parameters());
    println!("{LOG_HEADER}");
    train(&mut model, &train_set, &train_cfg, Some(&out), |e| {
        println!("{}", e.csv())
    })?;
    let last = checkpoint::epoch_path(&out, train_cfg.epochs);
    let final_path = out.join("model.ckpt");
    fs::copy(&last, &final_path).map_err(io_err(&final_path))?;
    println!("checkpoint: {}", final_path.display());
    Ok(())
}

fn print_report(r: &EvalReport) {
    println!("level: {}", r.level.name());
    println!("items: {}", r.count);
    println!("top1: {:.4}", r.top1);
    println!("top5: {:.4}", r.top5);
    for (w, acc) in &r.per_writer_accuracy {
        println!("writer {w}: {acc:.4} of {}", r.per_writer_count[w]);
    }
    for c in &r.confusion {
        println!("confused {} -> {}: {}", c.truth, c.predicted, c.count);
    }
}

fn cmd_eval(file: RunConfig, a: EvalArgs) -> Outcome {
    let level = match a.level {
        Some(LevelArg::Word) => Some(Level::Word),
        Some(LevelArg::Page) => Some(Level::Page),
        None => None,
    };
    let cfg = file.overlay(RunConfig {
        checkpoint: a.checkpoint,
        manifest: a.manifest,
        level,
        ..RunConfig::default()
    });
    let ckpt = existing(cfg.checkpoint.clone(), "checkpoint")?;
    let manifest = existing(cfg.manifest.clone(), "manifest")?;
    let (mut model, _) = checkpoint::load(&ckpt)?;
    let records = load_manifest(&manifest)?;
    if num_writers(&records) > model.config.num_writers {
        return Err(Failure::Runtime(Error::Dataset(format!(
            "manifest has writer ids up to {}, checkpoint classifies {}",
            num_writers(&records) - 1,
            model.config.num_writers
        ))));
    }
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let samples = load_for(&records, &model.config)?;
    let subset = of_split(&samples, split);
    let report = evaluate_level(&mut model, &subset, cfg.level.unwrap_or(Level::Word))?;
    print_report(&report);
    if let Some(path) = a.json {
        let text = serde_json::to_string_pretty(&report).expect("serialisable");
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

fn cmd_predict(file: RunConfig, a: PredictArgs) -> Outcome {
    let cfg = file.overlay(RunConfig {
        checkpoint: a.checkpoint,
        ..RunConfig::default()
    });
    let ckpt = existing(cfg.checkpoint.clone(), "checkpoint")?;
    let image = existing(Some(a.image), "image")?;
    let (mut model, _) = checkpoint::load(&ckpt)?;
    let img = read_png(&image)?;
    let x = preprocess(&img, model.config.input_height, model.config.input_width).map_err(Error::from)?;
    let shape = x.shape().to_vec();
    let x = x.reshape(&[1, shape[0], shape[1], shape[2]]).map_err(Error::from)?;
    let pred = model.predict(&x).map_err(Error::from)?.remove(0);
    println!("rank,writer,probability");
    for (rank, w) in ranking(&pred.probs).into_iter().take(5).enumerate() {
        println!("{},{},{:.6}", rank + 1, w, pred.probs[w]);
    }
    Ok(())
}

fn cmd_flops(file: RunConfig, a: FlopsArgs) -> Outcome {
    let cfg = file.overlay(RunConfig {
        num_writers: a.writers,
        ..a.net.overrides()
    });
    let net = cfg.net_config(100).map_err(usage)?;
    let report = analyze(&net).map_err(Error::from)?;
    if a.csv {
        println!("layer,kind,channels,height,width,params,flops");
        for r in &report.rows {
            let [c, h, w] = r.output;
            println!("{},{},{c},{h},{w},{},{}", r.name, r.kind.name(), r.params, r.flops);
        }
        println!("total,,,,,{},{}", report.total_params, report.total_flops);
    } else {
        println!("{report}");
        if let Some(reference) = reference_gflops(net.variant) {
            println!(
                "published figure: ~{reference} GFLOPs (the source lists four method names against three \
                 numbers, so which number belongs to which network is uncertain)"
            );
        }
    }
    Ok(())
}

fn cmd_synth(file: RunConfig, a: SynthArgs) -> Outcome {
    let cfg = file.overlay(RunConfig {
        out_dir: a.out,
        num_writers: a.writers,
        words_per_page: a.words,
        pages_per_writer: a.pages,
        seed: a.seed,
        ..RunConfig::default()
    });
    let synth_cfg = cfg.synth_config();
    synth_cfg.validate().map_err(usage)?;
    let dir: PathBuf = cfg.out_dir();
    let (manifest, records) = synth::generate(&synth_cfg, Path::new(&dir))?;
    println!("{} images, manifest {}", records.len(), manifest.display());
    Ok(())
}
