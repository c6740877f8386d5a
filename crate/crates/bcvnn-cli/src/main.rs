//! `bcvnn` command-line front end.
//!
//! Errors are reported as one line on stderr,
//! `error kind=<config|runtime> message="..."`, with exit status 2 for invalid
//! configuration and 1 for failures while running.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "bcvnn", version, about = "Bayesian complex-valued neural networks with dropout configuration search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write a checkpoint plus a per-epoch trace CSV.
    Train(TrainArgs),
    /// Monte-Carlo dropout prediction over a dataset.
    Predict(PredictArgs),
    /// Evolutionary search over per-layer dropout part modes.
    Search(SearchArgs),
    /// Evaluate every part-mode configuration and rank them.
    Enumerate(EnumerateArgs),
    /// Analytical hardware cost report for a network.
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset or convert IDX files to a dataset directory.
    Gendata(GendataArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML run configuration (must contain `schema_version = 1`); flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step. Falls back to the config file, then BCVNN_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for MC evaluation (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Omit the `# generated_unix=...` first line of CSV outputs.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ModeArg {
    ZeroImag,
    Dft,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Dataset directory written by `gendata`.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// IDX image file (used with --mnist-labels instead of --data).
    #[arg(long, value_name = "FILE")]
    pub mnist_images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, value_name = "FILE")]
    pub mnist_labels: Option<PathBuf>,
    /// How pixels become complex values.
    #[arg(long, value_enum)]
    pub complex_mode: Option<ModeArg>,
    /// Keep only the first N IDX samples.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// SGD learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weight-decay coefficient on kernel energy.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Momentum coefficient; 0 selects plain SGD.
    #[arg(long)]
    pub momentum: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EvalFlags {
    /// MC forward passes per input.
    #[arg(long, value_name = "T")]
    pub samples: Option<usize>,
    /// Equal-width calibration bins.
    #[arg(long)]
    pub n_bins: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Network description (TOML).
    #[arg(long, value_name = "FILE")]
    pub network: Option<PathBuf>,
    /// Override the part modes of the dropout layers, e.g. R-B-I.
    #[arg(long)]
    pub genome: Option<String>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Checkpoint directory written by `train`.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ObjectiveArg {
    MaxAcc,
    MinEce,
    Weighted,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SearchFlags {
    /// Cached fitness table (`genome,accuracy,ece` CSV) instead of training.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
    /// Network description for the train-and-evaluate pipeline.
    #[arg(long, value_name = "FILE")]
    pub network: Option<PathBuf>,
    /// Search objective.
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Accuracy weight for the weighted objective.
    #[arg(long)]
    pub w_acc: Option<f64>,
    /// ECE weight for the weighted objective.
    #[arg(long)]
    pub w_ece: Option<f64>,
    /// Admit only genomes with at most this many dropout masks.
    #[arg(long, conflicts_with = "min_dropout")]
    pub max_dropout: Option<usize>,
    /// Admit only genomes with at least this many dropout masks.
    #[arg(long)]
    pub min_dropout: Option<usize>,
    /// Fraction of the dataset held out to score genomes.
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[command(flatten)]
    pub search: SearchFlags,
    /// Population size.
    #[arg(long)]
    pub population: Option<usize>,
    /// Share of offspring produced by mutation (the rest by crossover).
    #[arg(long)]
    pub mutation_portion: Option<f64>,
    /// Per-gene mutation probability.
    #[arg(long)]
    pub mutation_prob: Option<f64>,
    /// Per-gene probability of inheriting from the second parent.
    #[arg(long)]
    pub crossover_prob: Option<f64>,
    /// Generations to run.
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    LatencyOpt,
    ResourceOpt,
    Both,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Network description (TOML).
    #[arg(long, value_name = "FILE")]
    pub network: Option<PathBuf>,
    /// Part modes of the dropout layers, e.g. R-B-I (default: as in the network).
    #[arg(long)]
    pub genome: Option<String>,
    /// Mapping scheme(s) to report.
    #[arg(long, value_enum, default_value = "both")]
    pub scheme: SchemeArg,
}

#[derive(Args, Debug)]
pub struct GendataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Convert these IDX files instead of generating synthetic data.
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Samples generated per class.
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    /// Per-sample shape, comma separated (e.g. 1,8,8).
    #[arg(long, value_delimiter = ',')]
    pub feature_shape: Option<Vec<usize>>,
    /// Base distance of class centroids from the origin.
    #[arg(long)]
    pub separation: Option<f64>,
}

/// Failure carrying its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn kind(&self) -> &'static str {
        if self.code == 2 { "config" } else { "runtime" }
    }
}

impl From<bcvnn::Error> for CliError {
    fn from(e: bcvnn::Error) -> Self {
        use bcvnn::Error as E;
        match e {
            E::Config(_) | E::InvalidArgument(_) | E::InvalidNetwork(_) => CliError::config(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Search(a) => commands::search(a),
        Command::Enumerate(a) => commands::enumerate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Gendata(a) => commands::gendata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.message.replace(['\n', '\r'], " ").replace('"', "'");
            eprintln!("error kind={} message=\"{msg}\"", e.kind());
            ExitCode::from(e.code)
        }
    }
}
