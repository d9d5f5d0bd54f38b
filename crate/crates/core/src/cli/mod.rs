//! `edgehst` command line: gen, train, score, threshold, eval.

mod commands;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use edgehst::cache::CachePolicy;
use edgehst::embed::EdgeCombinator;
use edgehst::hst::Mode;
use edgehst::pipeline::Weights;
use edgehst::streamgen::{Background, InjectionKind};
use edgehst::train::Optimizer;
use edgehst::Error;

#[derive(Debug, Parser)]
#[command(name = "edgehst", version, about = "Streaming edge anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Output directory (default: <runs-root>/<timestamp>-s<seed>).
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    runs_root: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled edge stream.
    Gen(GenArgs),
    /// Train the encoder on the training split and initialize the forests.
    Train(TrainArgs),
    /// Score a split of a stream with a trained model.
    Score(ScoreArgs),
    /// Fit a decision threshold on labeled validation scores.
    Threshold(ThresholdArgs),
    /// Compute detection metrics on labeled test scores.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, required_unless_present = "spec")]
    nodes: Option<usize>,
    #[arg(long, required_unless_present = "spec")]
    edges: Option<usize>,
    /// Comma-separated anomaly kinds: burst, spike, port-scan.
    #[arg(long, value_delimiter = ',')]
    inject: Vec<InjectionKind>,
    #[arg(long, default_value_t = 0.02)]
    anomaly_fraction: f64,
    #[arg(long)]
    communities: Option<usize>,
    #[arg(long)]
    cross_rate: Option<f64>,
    #[arg(long)]
    intensity: Option<f64>,
    #[arg(long)]
    episode_size: Option<usize>,
    #[arg(long)]
    mean_interarrival: Option<f64>,
    /// pa or uniform.
    #[arg(long)]
    background: Option<Background>,
    /// JSON stream specification; flags given explicitly override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stream file to write (default: <run-dir>/stream.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Edge list: source,destination,timestamp[,label].
    #[arg(long)]
    stream: PathBuf,
    /// Drop a non-numeric header line.
    #[arg(long)]
    skip_header: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    input: StreamArgs,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    split: String,
    #[arg(long, default_value_t = Mode::Static)]
    mode: Mode,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    fanout: Option<usize>,
    /// Hashed identity feature dimension.
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Explicit features: lines of `node,v1,...,vK`.
    #[arg(long, conflicts_with = "feature_dim")]
    features: Option<PathBuf>,
    /// mean or difference.
    #[arg(long)]
    combinator: Option<EdgeCombinator>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitPart {
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    input: StreamArgs,
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitPart::Test)]
    split_part: SplitPart,
    /// Override the split recorded at training time.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    cache_size: Option<usize>,
    #[arg(long)]
    cache_policy: Option<CachePolicy>,
    /// Source, destination and edge weights, e.g. `0,0,1`.
    #[arg(long)]
    weights: Option<Weights>,
    /// Override the mode recorded at training time.
    #[arg(long)]
    mode: Option<Mode>,
    /// Seed for neighbor sampling (default: the training seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Score file to write (default: <run-dir>/scores.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Labeled score file written by `score`.
    #[arg(long)]
    scores: PathBuf,
    /// Cross-check against a brute-force sweep.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("tau_source").required(true).args(["tau", "threshold"])))]
pub struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    /// Threshold report written by `threshold`.
    #[arg(long)]
    threshold: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    slices: usize,
    /// Subsample fraction for the robustness block.
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long, default_value_t = 9)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    run: RunArgs,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        e if e.is_data_error() => 2,
        _ => 3,
    }
}

/// Parses arguments, runs one command and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Score(a) => commands::score(a),
        Command::Threshold(a) => commands::threshold(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
