//! `netlearn` command-line front end.
//!
//! Exit codes: 0 success, 2 learner failure, 3 budget exhausted, 1 usage or
//! internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod files;

#[derive(Parser, Debug)]
#[command(name = "netlearn", version, about = "Learn one-hidden-layer ReLU networks from Gaussian samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance (and optionally labeled samples).
    Gen(GenArgs),
    /// Run the learner on an instance, network or samples file.
    Learn(LearnArgs),
    /// Exact and Monte-Carlo L2 distance between two networks.
    Eval(EvalArgs),
    /// Parameter sweep from a bench specification.
    Bench(BenchArgs),
    /// Subspace and cluster diagnostics without the search.
    Diag(DiagArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Theory,
    Practical,
    ExactMoments,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// separated, clustered_pairs, hard_csq or random.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    /// Norm bound `R`; coefficients satisfy `Σ|λ| ≤ R`.
    #[arg(long = "R", alias = "norm-bound", default_value_t = 1.0)]
    norm_bound: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    pair_distance: Option<f64>,
    #[arg(long)]
    pair_cancellation: Option<f64>,
    /// Comma-separated coefficients, e.g. `1,-1,1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambdas: Option<Vec<f64>>,
    /// Comma-separated linear term.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    linear_term: Option<Vec<f64>>,
    /// Orthonormal weight vectors (separated kind).
    #[arg(long)]
    orthogonal: bool,
    /// Instance file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a samples file with training and hold-out sets.
    #[arg(long)]
    samples_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    n_train: usize,
    #[arg(long, default_value_t = 10_000)]
    n_holdout: usize,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Master seed; every stage seed is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON parameter file: `epsilon`, `k`, `R`, `C`, `overrides`.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Practical)]
    mode: Mode,
    /// Target accuracy; overrides the parameter file.
    #[arg(long)]
    eps: Option<f64>,
    /// Search budget as `net_points=N,candidates=N,seconds=S`.
    #[arg(long)]
    budget: Option<String>,
    /// Return the best validated candidate instead of the first.
    #[arg(long)]
    best_of_all: bool,
}

#[derive(Args, Debug)]
struct LearnArgs {
    /// Instance, network or samples file.
    input: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Experiment record path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Learned model as a network file.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Bench specification (JSON).
    #[arg(long)]
    params: PathBuf,
    /// Records, one JSON object per line.
    #[arg(long)]
    out: PathBuf,
    /// Summary table (CSV); stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Overrides the specification's moment mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    budget: Option<String>,
}

#[derive(Args, Debug)]
struct DiagArgs {
    /// Instance or network file.
    input: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Cluster scale; suggested from the projection gaps when omitted.
    #[arg(long)]
    delta: Option<f64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Learn(a) => commands::learn(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Diag(a) => commands::diag(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
