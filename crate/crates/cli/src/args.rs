use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "stableaml", version, about = "Wallet-level AML analytics over stablecoin transfer logs")]
#[command(args_conflicts_with_subcommands = true, subcommand_required = false)]
pub struct Cli {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: logical cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Print a readable listing of a model file or model directory.
    #[arg(long, value_name = "PATH")]
    pub dump_model: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, normalize and validate a transfer log and optional side tables.
    Ingest(IngestArgs),
    /// Compute the wallet feature matrix.
    Featurize(FeaturizeArgs),
    /// Summarize the transaction graph and dump its edges.
    GraphStats(GraphStatsArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
    /// Train a model on a stratified split.
    Train(TrainArgs),
    /// Score a trained model on its held-out split.
    Evaluate(EvaluateArgs),
    /// Feature importances, consensus ranking and class signatures.
    Explain(ExplainArgs),
    /// Combine evaluation outputs into comparison tables.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Featurize(_) => "featurize",
            Command::GraphStats(_) => "graph-stats",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Explain(_) => "explain",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// `transfers.csv` or a directory holding it with optional
    /// `registry.csv`, `labels.csv` and `metadata.csv`.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Malformed rows tolerated before aborting.
    #[arg(long, default_value_t = 0)]
    pub error_budget: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturizeArgs {
    /// Directory with `transfers.csv` and optional `registry.csv`, `metadata.csv`.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub same_value_min_group: Option<usize>,
    #[arg(long)]
    pub proxy_window_seconds: Option<i64>,
    /// Tolerated relative amount difference for proxy forwarding.
    #[arg(long)]
    pub proxy_amount_tolerance: Option<f64>,
    /// Neighbor cap per expanded node in hop queries.
    #[arg(long)]
    pub fanout_cap: Option<usize>,
    /// Treat labeled non-normal wallets as flagged (needs `labels.csv`).
    #[arg(long)]
    pub flagged_from_labels: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphStatsArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5_000)]
    pub wallets: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Normal,cybercrime,blocklisted shares.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub proportions: Option<Vec<f64>>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    #[arg(long)]
    pub span_days: Option<u32>,
    #[arg(long)]
    pub mixer_count: Option<usize>,
    #[arg(long)]
    pub cex_count: Option<usize>,
    #[arg(long)]
    pub normal_mixer_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[value(alias = "lr")]
    Logreg,
    Rf,
    Gbm,
    Mlp,
    Sage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    None,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyArg {
    L1,
    L2,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    /// Transfer log; required for `sage`.
    #[arg(long, value_name = "FILE")]
    pub transfers: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.2)]
    pub test_ratio: f64,
    #[arg(long, default_value_t = 42)]
    pub split_seed: u64,
    /// Train on Normal vs Suspicious.
    #[arg(long)]
    pub binary: bool,
    #[arg(long, value_enum, default_value_t = WeightMode::None)]
    pub class_weights: WeightMode,
    /// Logistic regression inverse regularization strength.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub n_rounds: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Hidden layer widths (mlp) or the single hidden width (sage).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Directory written by `train`.
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    /// Defaults to `<model>/evaluation`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Collapse to Normal vs Suspicious after prediction.
    #[arg(long)]
    pub binary: bool,
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub transfers: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Builtin,
    Permutation,
    Shap,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    /// One or more directories written by `train` (tabular models only).
    #[arg(long, value_name = "DIR", value_delimiter = ',', required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Builtin, Method::Permutation, Method::Shap])]
    pub methods: Vec<Method>,
    /// Print the consensus ranking to stdout.
    #[arg(long)]
    pub consensus: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Rows sampled for SHAP.
    #[arg(long, default_value_t = 2_000)]
    pub max_rows: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rows shown with --consensus.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Directories written by `evaluate`.
    #[arg(long = "in", value_name = "DIR", value_delimiter = ',', required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
