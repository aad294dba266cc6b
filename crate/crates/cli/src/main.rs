//! `vgnae` command-line driver: split a bundle, train a model, or diagnose
//! isolated-node behavior. Every command's output is a pure function of the
//! bundle, the flags and the seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use vgnae::checkpoint;
use vgnae::dataio::{load_dataset, Dataset};
use vgnae::experiment::{evaluate, render_diagnose_report, render_train_report, sweep, train_model, ReportContext};
use vgnae::metrics::mean_std;
use vgnae::split::{read_manifest, split_edges, write_manifest};
use vgnae::{EdgeSplit, Error, ModelConfig, ModelKind, SplitMode};

#[derive(Parser)]
#[command(name = "vgnae", version, about = "Graph autoencoders for link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, train, evaluate on the test edges and write a metrics report.
    Train(RunArgs),
    /// Report stratified AUC and embedding norms by training degree.
    Diagnose(RunArgs),
    /// Write an edge split manifest for reuse across models.
    Split(SplitArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Bundle directory, or a name resolved as `data/<name>`.
    #[arg(long)]
    dataset: PathBuf,
    /// Training share of edges [default: 0.8, or 0.6 for diagnose].
    #[arg(long)]
    train_ratio: Option<f64>,
    /// ratio-1to3 or fixed-60-10-30 [default: ratio-1to3, or fixed-60-10-30 for diagnose].
    #[arg(long)]
    split_mode: Option<SplitMode>,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// gae, vgae, gnae or vgnae.
    #[arg(long, default_value = "gnae")]
    model: ModelKind,
    /// Seed or comma-separated seeds; each drives both the split and training.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seed: Vec<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Normalization scale of the GNCN encoder.
    #[arg(long)]
    scale: Option<f64>,
    /// Reuse a split written by `split` instead of splitting afresh.
    #[arg(long)]
    split_manifest: Option<PathBuf>,
    /// Model file: written by `train`, read by `diagnose`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// For `diagnose`: train a model now instead of loading a checkpoint.
    #[arg(long)]
    fresh: bool,
    /// Worker threads for seed sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Train,
    Diagnose,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Diagnose => "diagnose",
        }
    }

    fn default_split(self) -> (f64, SplitMode) {
        match self {
            Mode::Train => (0.8, SplitMode::Ratio1To3),
            Mode::Diagnose => (0.6, SplitMode::Fixed60_10_30),
        }
    }
}

fn resolve_dataset(path: &Path) -> PathBuf {
    if path.is_dir() {
        return path.to_path_buf();
    }
    let named = Path::new("data").join(path);
    if named.is_dir() {
        named
    } else {
        path.to_path_buf()
    }
}

fn load(data: &DataArgs) -> anyhow::Result<Dataset> {
    Ok(load_dataset(&resolve_dataset(&data.dataset))?)
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn split_for(data: &DataArgs, defaults: (f64, SplitMode), ds: &Dataset, seed: u64) -> vgnae::Result<EdgeSplit> {
    split_edges(
        &ds.graph,
        data.train_ratio.unwrap_or(defaults.0),
        data.split_mode.unwrap_or(defaults.1),
        seed,
    )
}

fn model_config(args: &RunArgs, seed: u64) -> vgnae::Result<ModelConfig> {
    let base = ModelConfig::new(args.model).with_seed(seed);
    let cfg = ModelConfig {
        dim: args.dim.unwrap_or(base.dim),
        hidden: args.hidden.unwrap_or(base.hidden),
        scale: args.scale.unwrap_or(base.scale),
        lr: args.lr.unwrap_or(base.lr),
        max_epochs: args.epochs.unwrap_or(base.max_epochs),
        patience: base.patience.min(args.epochs.unwrap_or(base.patience)),
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

/// One seed of `train` or `diagnose`: the rendered report and its test AUC.
fn run_seed(mode: Mode, args: &RunArgs, ds: &Dataset, manifest: Option<&EdgeSplit>, seed: u64) -> vgnae::Result<(String, f64)> {
    let split = match manifest {
        Some(s) => s.clone(),
        None => split_for(&args.data, mode.default_split(), ds, seed)?,
    };
    let cfg = model_config(args, seed)?;
    let load_existing = mode == Mode::Diagnose && !args.fresh;
    let (model, history) = if load_existing {
        let path = args
            .checkpoint
            .as_deref()
            .ok_or_else(|| Error::State("diagnose needs --checkpoint or --fresh".into()))?;
        if !path.is_file() {
            return Err(Error::State(format!(
                "checkpoint {} does not exist; pass --fresh to train one",
                path.display()
            )));
        }
        (checkpoint::load(path)?, None)
    } else {
        let (model, history) = train_model(&ds.graph, &split, &cfg)?;
        if let Some(path) = &args.checkpoint {
            checkpoint::save(&model, path)?;
        }
        (model, Some(history))
    };
    let eval = evaluate(&model, &ds.graph, &split)?;
    let ctx = ReportContext {
        command: mode.name(),
        dataset: &ds.name,
        model: &model,
        split: &split,
        training: history.as_ref().map(|h| (&cfg, h)),
    };
    let report = match mode {
        Mode::Train => render_train_report(&ctx, &eval),
        Mode::Diagnose => render_diagnose_report(&ctx, &eval),
    };
    Ok((report, eval.test.auc))
}

fn run(mode: Mode, args: &RunArgs) -> anyhow::Result<()> {
    if args.seed.is_empty() {
        bail!("--seed needs at least one value");
    }
    if args.checkpoint.is_some() && args.seed.len() > 1 {
        bail!("--checkpoint holds one model; pass a single --seed");
    }
    let ds = load(&args.data)?;
    let manifest = match &args.split_manifest {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let split = read_manifest(&text)?;
            split.validate(&ds.graph)?;
            Some(split)
        }
        None => None,
    };
    let results = sweep(&args.seed, args.jobs, |seed| run_seed(mode, args, &ds, manifest.as_ref(), seed));
    let mut out = String::new();
    let mut aucs = Vec::new();
    for (seed, r) in args.seed.iter().zip(results) {
        let (report, auc) = r.with_context(|| format!("seed {seed}"))?;
        out.push_str(&report);
        aucs.push(auc);
    }
    if aucs.len() > 1 {
        let (mean, std) = mean_std(&aucs);
        out.push_str(&format!("# test AUC over {} seeds: {mean:.4} ± {std:.4}\n", aucs.len()));
    }
    emit(args.data.output.as_deref(), &out)
}

fn split(args: &SplitArgs) -> anyhow::Result<()> {
    let ds = load(&args.data)?;
    let split = split_for(&args.data, Mode::Train.default_split(), &ds, args.seed)?;
    emit(args.data.output.as_deref(), &write_manifest(&split))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(args) => run(Mode::Train, args),
        Command::Diagnose(args) => run(Mode::Diagnose, args),
        Command::Split(args) => split(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
