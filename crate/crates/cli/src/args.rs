use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddn::model::Pooling;

/// Battery discharge-capacity forecasting with a reference-anchored attention network.
///
/// Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
/// DDN_THREADS caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "ddn", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet: one CSV per battery plus manifest.toml.
    Synth(SynthArgs),
    /// Split a fleet, train, and write model.ckpt, training_log.jsonl and split.toml.
    Train(TrainArgs),
    /// Evaluate a checkpoint: metrics.txt, predictions.csv and attention.csv.
    Eval(EvalArgs),
    /// Per-cycle capacity predictions for one battery CSV.
    Predict(PredictArgs),
    /// Attention weights per frame and their correlation with capacity fade.
    InspectAttention(InspectArgs),
}

const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FleetKind {
    /// Smooth fade to about 0.8·Q₀.
    Desk,
    /// Fade rate switches mid-life.
    PathDependent,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of batteries.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 80, value_parser = clap::value_parser!(u64).range(1..))]
    pub cycles: u64,
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FleetKind::Desk)]
    pub fleet: FleetKind,
    /// Replace existing files in --out.
    #[arg(long)]
    pub force: bool,
}

/// Settings shared by every command that builds frames from raw data.
#[derive(Debug, Args, Default, Clone)]
pub struct ProfileArgs {
    /// Built-in normalization profile: nasa1, nasa2, mit or oxford.
    #[arg(long)]
    pub profile: Option<String>,
    /// Custom normalization profile (TOML); overrides --profile.
    #[arg(long)]
    pub profile_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of canonical battery CSV files.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long, value_parser = parse_pooling)]
    pub pooling: Option<Pooling>,
    /// History cycles per frame (N).
    #[arg(long)]
    pub history_n: Option<usize>,
    /// Embedding width of every feature (K).
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Head hidden width (H₁).
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    /// Attention hidden width (H₂).
    #[arg(long)]
    pub attn_hidden: Option<usize>,
    /// Seeds the battery split, initialization and shuffling.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Predict state of health (capacity over cycle-0 capacity) instead of Ah.
    #[arg(long)]
    pub soh: bool,
    /// Replace an existing checkpoint in --out.
    #[arg(long)]
    pub force: bool,
}

fn parse_pooling(s: &str) -> Result<Pooling, String> {
    s.parse().map_err(|e: ddn::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of battery CSV files.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Normalization profile; defaults to the one stored in the checkpoint.
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// split.toml written by `train`; restricts evaluation to --subset.
    #[arg(long, requires = "subset")]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, requires = "split")]
    pub subset: Option<Subset>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One battery CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A battery CSV file or a directory of them.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
}
