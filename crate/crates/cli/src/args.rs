use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use propensity::beta::Estimator;
use propensity::data::SplitRatios;
use propensity::explain::{Objective, Scheme};
use propensity::models::ModelKind;

pub const MODEL_ENV: &str = "PROPENSITY_MODEL";

#[derive(Debug, Parser)]
#[command(name = "propensity", version, about = "Train, evaluate, explain and serve toxicity propensity models")]
pub struct Cli {
    /// Log level for diagnostics on stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw article records into labeled examples.
    Ingest(IngestArgs),
    /// Split labeled examples by publishing date.
    Split(SplitArgs),
    /// Fit a model on a split directory.
    Train(TrainArgs),
    /// Report rank and error metrics on labeled examples.
    Eval(EvalArgs),
    /// Score one text or a file of texts.
    Score(ScoreArgs),
    /// Token attributions for one text.
    Explain(ExplainArgs),
    /// Per-term NBLR weights from a corpus or an NBLR model.
    NblrWeights(NblrWeightsArgs),
    /// Predictive Beta density as CSV.
    PdfCurve(PdfCurveArgs),
    /// AUC@PR against human judgements at joint-score thresholds.
    Bench(BenchArgs),
    /// HTTP scoring and explanation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model artifact path.
    #[arg(long = "model", env = MODEL_ENV)]
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct TextArgs {
    #[arg(long, default_value = "")]
    pub title: String,
    #[arg(long, default_value = "")]
    pub body: String,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw article JSONL ("-" for stdin).
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// Labeled example JSONL ("-" for stdout).
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
    /// Articles with fewer scored comments are dropped.
    #[arg(long, default_value_t = propensity::data::DEFAULT_MIN_COMMENTS)]
    pub min_comments: usize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Labeled example JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for train/validation/test JSONL and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Train:validation:test weights.
    #[arg(long, default_value = "8:1:1")]
    pub ratios: SplitRatios,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Split directory containing train.jsonl and validation.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    /// Model family: bow-beta, bow-mae, bow-mse, nblr or emb-beta.
    #[arg(long)]
    pub model: ModelKind,
    /// Artifact to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Adam learning rate (default 1e-2, or 1e-5 for emb-beta).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Maximum number of epochs.
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minimum document frequency for bag-of-words terms.
    #[arg(long, default_value_t = propensity::featurize::DEFAULT_MIN_DF)]
    pub min_df: usize,
    /// Embedding width for emb-beta.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Write per-epoch losses as JSONL.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Labeled example JSONL, usually a split's test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "mean")]
    pub estimator: Estimator,
    /// Write id,label,prediction CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Evaluate even if the split manifest does not match the model's training data.
    #[arg(long)]
    pub allow_fingerprint_mismatch: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub text: TextArgs,
    /// JSONL of {id, title, body} records; one response per line.
    #[arg(long, conflicts_with_all = ["title", "body"])]
    pub input: Option<PathBuf>,
    /// Grid points of the density curve.
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long, default_value = "as")]
    pub scheme: Scheme,
    #[arg(long, default_value = "mean")]
    pub objective: Objective,
    /// Number of top tokens (default: a tenth of the tokens, at least one).
    #[arg(long)]
    pub k: Option<usize>,
    /// Write a heatmap HTML file.
    #[arg(long)]
    pub html: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NblrWeightsArgs {
    /// NBLR model artifact to read weights from.
    #[arg(long, env = MODEL_ENV, conflicts_with = "data", required_unless_present = "data")]
    pub model: Option<PathBuf>,
    /// Labeled example JSONL to fit weights on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = propensity::featurize::DEFAULT_MIN_DF)]
    pub min_df: usize,
    /// Only the N largest weights by magnitude.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PdfCurveArgs {
    #[arg(long, requires = "beta", conflicts_with = "model")]
    pub alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    pub beta: Option<f64>,
    /// Beta model artifact; the curve is for the given text.
    #[arg(long, required_unless_present = "alpha")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Labeled example JSONL of the judged articles.
    #[arg(long)]
    pub examples: PathBuf,
    /// Annotation JSONL of {id, group1, group2} records.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Joint-score thresholds; an article is positive when its score reaches the threshold.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub thresholds: Vec<i32>,
    #[arg(long, default_value = "mean")]
    pub estimator: Estimator,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}
