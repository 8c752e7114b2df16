use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "broncholoc", version, about = "Online topological bronchoscope localization")]
struct Cli {
    /// Tree specification file; the bundled 15-node airway tree if unset.
    #[arg(long, global = true, env = "BRONCHOLOC_TREE")]
    tree: Option<PathBuf>,

    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert every frame to its k-level k-means image.
    Quantize(QuantizeArgs),
    /// Count lumens per frame with the branching-point detector.
    Detect(DetectArgs),
    /// Run the gated Bayes filter over a frame sequence, streaming results.
    Localize(LocalizeArgs),
    /// Top-k accuracy of per-frame distributions against ground truth.
    Evaluate(EvaluateArgs),
    /// Write synthetic sequences with ground truth and likelihoods.
    Simulate(SimulateArgs),
    /// Offline most-likely path through the tree.
    Viterbi(ViterbiArgs),
    /// Fit the nearest-centroid frame classifier.
    TrainCentroids(TrainArgs),
    /// Print the tree in its specification format.
    Tree,
}

#[derive(Args, Debug, Clone)]
struct DetectorOpts {
    /// Percentile of frame intensities used as darkness threshold.
    #[arg(long, default_value_t = 10.0)]
    percentile: f64,
    /// Minimum lumen area as a fraction of the frame area.
    #[arg(long = "area-frac", default_value_t = 0.01)]
    area_frac: f64,
    #[arg(long, value_enum, default_value_t = Conn::Eight)]
    connectivity: Conn,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Conn {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Gate {
    Branch,
    Always,
    Never,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of gray levels.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Seed Lloyd iterations at quantiles instead of the exact optimum.
    #[arg(long)]
    quantile_init: bool,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    frames: PathBuf,
    #[command(flatten)]
    detector: DetectorOpts,
    /// Write a three-panel PNG per frame into this directory.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Report file (CSV); stdout if unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    #[arg(long)]
    frames: PathBuf,
    /// Per-frame likelihood file (CSV with node-label header).
    #[arg(long, conflicts_with = "centroids")]
    likelihoods: Option<PathBuf>,
    /// Nearest-centroid model used as the likelihood source.
    #[arg(long)]
    centroids: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Gate::Branch)]
    gate: Gate,
    #[arg(long, default_value_t = 1e-9)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    m: u32,
    #[arg(long, default_value_t = 3)]
    topk: usize,
    #[command(flatten)]
    detector: DetectorOpts,
    /// Gray levels for the classifier input.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Posterior output (CSV, one row per frame).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Per-frame distributions (posterior or likelihood CSV); repeatable.
    #[arg(long = "posteriors", required = true, num_args = 1..)]
    posteriors: Vec<PathBuf>,
    /// Ground-truth label files, one per distribution file, same order.
    #[arg(long = "truth", required = true, num_args = 1..)]
    truth: Vec<PathBuf>,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    topk: Vec<usize>,
    /// Name shown in the classifier column.
    #[arg(long, default_value = "5-level")]
    classifier: String,
    /// Mark rows as produced by the Bayes filter.
    #[arg(long)]
    bayesian: bool,
    /// Mark rows as produced with the branching detector gate.
    #[arg(long)]
    branch_detector: bool,
    /// Print a confusion matrix per sequence.
    #[arg(long)]
    confusion: bool,
    /// Report file (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Comma-separated node labels starting at the root.
    #[arg(long, conflicts_with = "random")]
    walk: Option<String>,
    /// Number of random down-and-back walks to generate.
    #[arg(long)]
    random: Option<usize>,
    /// Deepest node a random walk may reach.
    #[arg(long, default_value_t = 4)]
    max_depth: u32,
    #[arg(long, default_value_t = 1)]
    frames_per_node: usize,
    #[arg(long, default_value_t = 4)]
    frames_per_transition: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Square frame side in pixels.
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ViterbiArgs {
    #[arg(long)]
    likelihoods: PathBuf,
    /// Let the path end anywhere instead of at the root.
    #[arg(long)]
    unconstrained: bool,
    #[arg(long, default_value_t = 1e-9)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    m: u32,
    #[arg(long, default_value_t = 3)]
    topk: usize,
    /// Ground truth to score the decoded path against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Per-frame ranking output (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Frame directories; repeatable.
    #[arg(long = "frames", required = true, num_args = 1..)]
    frames: Vec<PathBuf>,
    /// Truth files matching each frame directory.
    #[arg(long = "truth", required = true, num_args = 1..)]
    truth: Vec<PathBuf>,
    #[arg(long, default_value_t = 32)]
    thumb: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause
            .downcast_ref::<std::io::Error>()
            .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    match commands::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
