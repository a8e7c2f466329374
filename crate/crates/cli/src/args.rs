use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "clickcfa",
    version,
    about = "Predict correct-on-first-attempt quiz outcomes from video clickstreams"
)]
pub struct Cli {
    /// Directory under which run directories are created
    /// [default: $CLICKCFA_RUNS, else ./runs].
    #[arg(long, global = true)]
    pub out_root: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus from behavioural archetypes.
    Generate(GenerateArgs),
    /// Parse an event log and report what was read.
    Parse(CommonArgs),
    /// Pre-train the recurrent encoder on leave-one-out click prediction.
    Pretrain(CommonArgs),
    /// Train one recipe with one fold held out.
    Train(CommonArgs),
    /// Cross-validate one recipe, or every recipe with `--recipe all`.
    Evaluate(CommonArgs),
    /// Cross-validate a meta recipe at several meta-set usage fractions.
    Sweep(CommonArgs),
    /// Frequent n-gram distributions split by prediction outcome.
    Analyze(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Parse(_) => "parse",
            Command::Pretrain(_) => "pretrain",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::Analyze(_) => "analyze",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Archetype file (flat key=value); built-in archetypes when omitted.
    #[arg(long)]
    pub archetypes: Option<PathBuf>,
    /// Number of sessions.
    #[arg(long)]
    pub n: Option<usize>,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resolved configuration of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Events file; sidecars are found next to it.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Recipe name, e.g. gru, pre-gru-meta-c2, 3-gram, cnn, all.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Key=value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for folds, initialisation and batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Held-out fold for `train` and `pretrain`.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Classifier training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// GRU hidden size.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Classifier learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weighting-net learning rate.
    #[arg(long)]
    pub meta_lr: Option<f64>,
    /// Maximum pre-training epochs.
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// Comma-separated usage fractions for `sweep`.
    #[arg(long)]
    pub fractions: Option<String>,
    /// Gram length for `analyze`.
    #[arg(long)]
    pub gram_n: Option<usize>,
    /// Any recipe key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}
