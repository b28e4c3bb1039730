//! The `grrnn` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use grrnn_core::datagen::Split;
use grrnn_core::eval::Averaging;
use grrnn_core::model::{count_flops, count_params, Axis, BackboneConfig, VariantKind};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::corpus::{generate_corpus, MANIFEST_NAME};
use crate::error::Error;
use crate::pipeline::{evaluate, run_train, write_per_writer, write_results, Protocol};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "grrnn", version, about = "Writer identification with fragment-sequence recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic handwriting corpus.
    Gen(GenArgs),
    /// Train a network on a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Print parameter and FLOP counts per variant.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    writers: usize,
    #[arg(long, default_value_t = 50)]
    words: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// key=value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Disable translation augmentation.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// word, line, page, feature or all.
    #[arg(long, default_value = "all")]
    protocol: String,
    #[arg(long, default_value = "test")]
    split: String,
    /// Expected variant; a mismatch with the checkpoint is an error.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    axis: Option<String>,
    /// Writer models from normalized (default) or raw features.
    #[arg(long, default_value = "normalized")]
    averaging: String,
    /// Results CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-writer word accuracy CSV path.
    #[arg(long)]
    per_writer: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long, default_value_t = 657)]
    writers: usize,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    width: f64,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Core(grrnn_core::Error::Config(_)) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Inspect(a) => inspect(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn gen(a: GenArgs, out: &mut dyn Write) -> Result<(), Failure> {
    grrnn_core::datagen::check_corpus_size(a.writers, a.words).map_err(usage)?;
    let rows = generate_corpus(a.writers, a.words, a.seed, &a.out)?;
    let train = rows.iter().filter(|r| r.split == Split::Train).count();
    let _ = writeln!(
        out,
        "wrote {} images ({} train, {} test) and {}",
        rows.len(),
        train,
        rows.len() - train,
        a.out.join(MANIFEST_NAME).display()
    );
    Ok(())
}

fn run_config(a: &TrainArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &a.config {
        cfg.apply_file(path)?;
    }
    let flags = [
        ("variant", &a.variant),
        ("axis", &a.axis),
        ("mode", &a.mode),
        ("width", &a.width),
        ("epochs", &a.epochs),
        ("batch", &a.batch),
        ("lr", &a.lr),
        ("weight_decay", &a.weight_decay),
        ("epsilon", &a.epsilon),
        ("seed", &a.seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(m) = &a.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    if a.no_augment {
        cfg.train.augment = false;
    }
    cfg.validate()?;
    if cfg.manifest.is_none() {
        return Err(usage("--manifest is required"));
    }
    if cfg.out.is_none() {
        return Err(usage("--out is required"));
    }
    Ok(cfg)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = run_config(&a)?;
    let t = &cfg.train;
    let _ = writeln!(
        out,
        "lr={} batch={} epochs={} decay={} epsilon={} halve_every={} seed={}",
        t.lr0, t.batch_size, t.epochs, t.weight_decay, t.epsilon, t.halve_every, t.seed
    );
    let report = run_train(&cfg, out)?;
    let _ = writeln!(out, "saved {}", report.checkpoint.display());
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let protocols: Vec<Protocol> = match a.protocol.as_str() {
        "all" => Protocol::ALL.to_vec(),
        p => vec![Protocol::parse(p).ok_or_else(|| usage(format!("unknown protocol `{p}`")))?],
    };
    let split = Split::parse(&a.split).ok_or_else(|| usage(format!("unknown split `{}`", a.split)))?;
    let averaging = match a.averaging.as_str() {
        "normalized" => Averaging::NormalizedMean,
        "raw" => Averaging::RawMean,
        s => return Err(usage(format!("unknown averaging `{s}`"))),
    };
    let expected_kind = a.variant.as_deref().map(VariantKind::parse).transpose().map_err(usage)?;
    let expected_axis = a.axis.as_deref().map(Axis::parse).transpose().map_err(usage)?;
    let (net, meta) = checkpoint::load(&a.checkpoint)?;
    let v = meta.net.variant;
    if expected_kind.is_some_and(|k| k != v.kind) || expected_axis.is_some_and(|x| x != v.axis) {
        return Err(Failure::Runtime(format!(
            "{} holds a {}-{} network, not the requested variant",
            a.checkpoint.display(),
            v.kind.name(),
            v.axis.name()
        )));
    }
    let report = evaluate(&net, &meta, &a.manifest, split, &protocols, averaging)?;
    let _ = writeln!(out, "protocol,variant,axis,mode,top1,top5");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{},{},{:.4},{:.4}", r.protocol.name(), r.variant, r.axis, r.mode, r.top1, r.top5);
    }
    if let Some(p) = &a.out {
        write_results(p, &report.rows)?;
    }
    if let Some(p) = &a.per_writer {
        write_per_writer(p, &report.per_writer)?;
    }
    Ok(())
}

fn inspect(a: InspectArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.writers < 2 {
        return Err(usage("--writers must be at least 2"));
    }
    if !(a.width.is_finite() && a.width > 0.0) {
        return Err(usage("--width must be positive"));
    }
    let kinds = match &a.variant {
        Some(v) => vec![VariantKind::parse(v).map_err(usage)?],
        None => VariantKind::ALL.to_vec(),
    };
    let backbone = BackboneConfig::with_width(a.width);
    let _ = writeln!(out, "variant  params      flops (writers={}, width={})", a.writers, a.width);
    for k in kinds {
        let p = count_params(k, a.writers, &backbone);
        let f = count_flops(k, a.writers, &backbone).total();
        let _ = writeln!(out, "{:<8} {:<11} {:.2}G ({:.2}M params, {} MACs)", k.name(), p, f as f64 / 1e9, p as f64 / 1e6, f);
    }
    Ok(())
}
