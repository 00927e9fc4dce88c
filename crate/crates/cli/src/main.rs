//! `dance`: batch entry points for graph learning, oracle fitting,
//! counterfactual search, benchmarking and the HTTP service.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "dance", version, about = "Diverse, plausible counterfactual explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a relationship graph (DirectLiNGAM, optional expert merge).
    LearnGraph(LearnGraphArgs),
    /// Fit a built-in classifier.
    Fit(FitArgs),
    /// Generate counterfactuals for one instance.
    Explain(ExplainArgs),
    /// Run the method comparison over a directory of CSV files.
    Benchmark(BenchmarkArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Label column.
    #[arg(long, default_value = "target")]
    target: String,
    /// JSON array of per-feature schema overrides.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linear,
    Cpd,
}

#[derive(Args)]
struct LearnGraphArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "linear")]
    mode: ModeArg,
    /// Quantile bins per feature in CPD mode.
    #[arg(long, default_value_t = 5)]
    bins: usize,
    /// Drop learned edges whose normalized weight is below this magnitude.
    #[arg(long, default_value_t = 0.05)]
    prune: f64,
    /// Dirichlet pseudo-count for CPD tables.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Expert graph JSON merged over the learned one.
    #[arg(long)]
    expert: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Logistic,
    Stumps,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Boosting rounds (stumps).
    #[arg(long)]
    rounds: Option<usize>,
    /// Gradient epochs (logistic).
    #[arg(long)]
    epochs: Option<usize>,
    /// L2 penalty (logistic).
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model JSON written by `fit` (or fetched from the service).
    #[arg(long)]
    model: PathBuf,
    /// Graph JSON written by `learn-graph`; without it plausibility is zero.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Raw-space instance: a JSON array, a JSON object keyed by feature, or a path to either.
    #[arg(long, conflicts_with = "instance_index", required_unless_present = "instance_index")]
    instance_json: Option<String>,
    /// Use this data row (0-based) as the instance.
    #[arg(long)]
    instance_index: Option<usize>,
    /// Desired class, as a label or a class index.
    #[arg(long)]
    desired: String,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Optimizer trials per counterfactual.
    #[arg(long, default_value_t = 300)]
    budget: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    w_div: f64,
    #[arg(long, default_value_t = 1.0)]
    w_prox: f64,
    #[arg(long, default_value_t = 1.0)]
    w_sparse: f64,
    #[arg(long, default_value_t = 1.0)]
    w_plaus: f64,
    /// Features that must keep their values.
    #[arg(long, value_delimiter = ',')]
    lock: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Logistic,
    Stumps,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Directory of CSV files, one dataset each.
    #[arg(long)]
    datasets: PathBuf,
    /// Comma-separated methods: dance, dance-ablated, external:NAME=COMMAND.
    #[arg(long, default_value = "dance,dance-ablated")]
    adapters: String,
    #[arg(long)]
    out: PathBuf,
    /// Per-cell CSV summary.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "target")]
    target: String,
    #[arg(long, value_enum, default_value = "logistic")]
    oracle: OracleArg,
    #[arg(long, default_value_t = 20)]
    queries: usize,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 300)]
    budget: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Worker threads for benchmark cells.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Persist artifacts here; in memory when omitted.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    /// Time limit for one explain request, in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// Allowed browser origin for CORS; any when omitted.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();
    let result: Result<(), CliError> = match cli.command {
        Command::LearnGraph(a) => commands::learn_graph(a),
        Command::Fit(a) => commands::fit(a),
        Command::Explain(a) => commands::explain(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
