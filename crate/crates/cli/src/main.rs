//! `flowgame`: generate, label, encode and benchmark network flow game
//! datasets.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for runtime
//! errors. Failures print one JSON object on stderr:
//! `{"error": "<kind>", "message": "<text>"}`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Usage;

#[derive(Debug, Parser)]
#[command(
    name = "flowgame",
    version,
    about = "Cardinal network flow game datasets and Banzhaf labels"
)]
struct Cli {
    /// Base seed. Defaults to the dataset's own seed where one exists, else 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to one per core). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "FLOWGAME_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate unlabeled random instances.
    Generate(GenerateArgs),
    /// Attach Banzhaf labels to an instance dataset.
    Label(LabelArgs),
    /// Materialize encoded graphs from a labeled dataset.
    Encode(EncodeArgs),
    /// Write deterministic train/test index files.
    Split(SplitArgs),
    /// Time labeling methods and emit the comparison table CSV.
    Bench(BenchArgs),
    /// Print the four-node worked example with every coalition value.
    Example(ExampleArgs),
    /// Label histograms and zero-flow counts as CSV.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Node count.
    #[arg(long)]
    n: Option<usize>,
    /// Agent count.
    #[arg(long)]
    m: Option<usize>,
    /// Edge probability.
    #[arg(long)]
    p: Option<f64>,
    /// Number of instances.
    #[arg(long)]
    count: Option<u64>,
    /// Largest edge capacity.
    #[arg(long)]
    c_max: Option<u64>,
    /// Records per shard.
    #[arg(long)]
    shard_size: Option<usize>,
    /// `key=value` file with any of n, m, p, count, seed, c_max, shard_size.
    /// Flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Exact,
    Mc,
    Hybrid,
}

#[derive(Debug, Args)]
struct LabelArgs {
    /// Input instance dataset directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "hybrid")]
    policy: Policy,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 10_000)]
    mc_samples: u64,
    /// Largest agent count labeled exactly under the hybrid policy.
    #[arg(long, default_value_t = 10)]
    exact_max_agents: usize,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// Input labeled dataset directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Zero-pad agent blocks and labels to this width.
    #[arg(long)]
    pad_to: Option<usize>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Manifest file or the dataset directory holding it.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for train.txt and test.txt (defaults to the dataset).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMethod {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Auto,
    Direct,
    Tabulated,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Labeling methods to time.
    #[arg(long, value_enum, required = true, num_args = 1..)]
    method: Vec<BenchMethod>,
    /// Configurations such as `n=20,m=5,p=1.0`.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<String>,
    /// Graphs per configuration, the first five being warmup.
    #[arg(long, default_value_t = 35)]
    graphs: usize,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    /// Monte-Carlo coalition evaluation strategy.
    #[arg(long, value_enum, default_value = "auto")]
    strategy: Strategy,
    /// Repetitions; the median is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Time with every core instead of one.
    #[arg(long)]
    parallel: bool,
    /// Extra rows in the table layout, e.g. surrogate inference timings.
    #[arg(long)]
    surrogate_rows: Option<PathBuf>,
    /// CSV output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExampleArgs {
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Labeled instance dataset directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Histogram bins over [0, 1].
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Directory for the CSV files (defaults to the dataset).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    let ctx = commands::Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Generate(args) => commands::generate(&ctx, args),
        Command::Label(args) => commands::label(&ctx, args),
        Command::Encode(args) => commands::encode(&ctx, args),
        Command::Split(args) => commands::split(&ctx, args),
        Command::Bench(args) => commands::bench(&ctx, args),
        Command::Example(args) => commands::example(args),
        Command::Stats(args) => commands::stats(&ctx, args),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if err.is::<Usage>() {
        "usage"
    } else if let Some(e) = err.downcast_ref::<flowgame::Error>() {
        e.kind()
    } else if let Some(e) = err.downcast_ref::<flowgame_bench::BenchError>() {
        match e {
            flowgame_bench::BenchError::Label(inner) => inner.kind(),
            _ => "bench",
        }
    } else if err.is::<std::io::Error>() {
        "io"
    } else {
        "runtime"
    }
}

/// The error and its causes joined by `": "`, skipping causes that an outer
/// message already quotes.
fn message(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if text.contains(&part) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&part);
    }
    text
}

fn report(kind: &str, message: String) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim_end().to_string());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = error_kind(&err);
            report(kind, message(&err));
            ExitCode::from(if kind == "usage" { 1 } else { 2 })
        }
    }
}
