//! `vrfer`: synthesize data, train and fuse classifiers, evaluate, compare
//! and grid-search.
//!
//! Exit codes: 0 on success, 1 on validation or domain errors, 2 on usage
//! errors. Diagnostics go to stderr; data goes to files or stdout.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod preds;

#[derive(Debug, Parser)]
#[command(name = "vrfer", version, about = "Facial expression recognition from VR headset expression activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic FEA dataset and matching image observations.
    Synth(SynthArgs),
    /// Train a unimodal classifier on FEA vectors.
    Train(TrainArgs),
    /// Write the penultimate-layer features of a trained MLP.
    ExtractFeatures(ExtractArgs),
    /// Train a fusion model on top of a frozen FEA model.
    Fuse(FuseArgs),
    /// Evaluate any saved model on one split.
    Evaluate(EvaluateArgs),
    /// Compare two prediction files: agreement table and oracle accuracy.
    Compare(CompareArgs),
    /// Exhaustive grid search with best-validation selection.
    Gridsearch(GridArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Synthetic data config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving fea.jsonl and image_obs.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnimodalKind {
    Mlp,
    Logreg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FuseStrategy {
    Average,
    WeightedSum,
    ConcatDense,
    Bilinear,
    CrossAttention,
    Intermediate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
}

/// Optional evaluation outputs shared by several subcommands.
#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation report on the test split.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Test-split predictions as JSONL.
    #[arg(long)]
    preds: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// FEA dataset (JSONL).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: UnimodalKind,
    /// Training config (JSON) with optional `train`, `mlp` and `logreg` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Training history; defaults to `<out>.history.json`.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Trained MLP model file.
    #[arg(long)]
    model: PathBuf,
    /// FEA dataset (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Output features (JSONL), one line per sample.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long, value_enum)]
    strategy: FuseStrategy,
    /// Frozen FEA model; intermediate fusion needs an MLP.
    #[arg(long)]
    fea_model: PathBuf,
    /// FEA dataset (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Image-model observations (JSONL).
    #[arg(long)]
    image_obs: PathBuf,
    /// Training config (JSON) with optional `train` and `intermediate` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output fusion model file.
    #[arg(long)]
    out: PathBuf,
    /// Training history; defaults to `<out>.history.json`.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Any saved model file.
    #[arg(long)]
    model: PathBuf,
    /// FEA dataset (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Image observations; required for fusion models. With a unimodal
    /// model, scores one row per paired view.
    #[arg(long)]
    image_obs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Output report.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Predictions as JSONL.
    #[arg(long)]
    preds: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Predictions of model A (JSONL).
    #[arg(long)]
    preds_a: PathBuf,
    /// Predictions of model B (JSONL), row-aligned with A.
    #[arg(long)]
    preds_b: PathBuf,
    /// FEA dataset supplying the true labels.
    #[arg(long)]
    labels: PathBuf,
    /// Output report.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Grid spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// FEA dataset (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Image observations, for fusion grids.
    #[arg(long)]
    image_obs: Option<PathBuf>,
    /// Frozen FEA model, for fusion grids.
    #[arg(long)]
    fea_model: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Ranked results (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Save the winning model here.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Evaluate every candidate on test, not only the winner.
    #[arg(long)]
    evaluate_all: bool,
    /// Record per-candidate training wall time (makes results nondeterministic).
    #[arg(long)]
    wall_time: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::ExtractFeatures(a) => commands::extract_features(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Gridsearch(a) => commands::gridsearch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}
