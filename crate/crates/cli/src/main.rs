//! Operator frontend: analyze one contract, batch a corpus, pin statistics,
//! score, rank, evaluate against labels, fetch live bytecode.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 error,
//! 2 partial (analysis completed with an incomplete CFG).

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "obfuscan",
    version,
    about = "Quantify obfuscation of funds-transfer logic in EVM bytecode"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a single contract and print its transfer sites and features.
    Analyze(AnalyzeArgs),
    /// Analyze a whole corpus with a worker pool and write analysis records.
    Batch(BatchArgs),
    /// Pin corpus statistics (per-feature mean/std) from analysis records.
    Stats(StatsArgs),
    /// Score records against a pinned statistics snapshot.
    Score(ScoreArgs),
    /// Rank scored records: top-K summary, quantiles, shares, prevalence.
    Rank(RankArgs),
    /// Classification harness over a labeled feature CSV.
    Eval(EvalArgs),
    /// Fetch runtime bytecode for addresses over JSON-RPC.
    Fetch(FetchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        matches!(v, OnOff::On)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Jsonl,
    Csv,
    Text,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CorpusFormatArg {
    HexDir,
    Jsonl,
}

/// Feature-extraction toggles shared by analyze and batch.
#[derive(Args, Clone)]
struct FeatureFlags {
    /// Count SLOAD as an F1 derivation step.
    #[arg(long, value_enum, default_value = "on")]
    sload_steps: OnOff,
    /// Report SELFDESTRUCT balance sweeps as transfer sites.
    #[arg(long, value_enum, default_value = "on")]
    selfdestruct_sites: OnOff,
    /// F7 log classifier: `heuristic` or `external:<url>`.
    #[arg(long, default_value = "heuristic")]
    f7_classifier: String,
    /// Known event-signature file (`hash: relation` lines) overriding the
    /// built-in transfer-semantic set.
    #[arg(long)]
    signatures: Option<PathBuf>,
    /// Where to append ambiguous-log review entries (JSONL).
    #[arg(long)]
    review_out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Bytecode file (hex text or raw binary); stdin when absent.
    input: Option<PathBuf>,
    /// Inline hex bytecode instead of a file.
    #[arg(long, conflicts_with = "input")]
    hex: Option<String>,
    /// Statistics snapshot; adds the score and per-feature terms.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    /// Also print a debug dump: disasm (text), cfg (Graphviz), ssa
    /// (listing), pdg (Graphviz of the first transfer-containing function).
    #[arg(long)]
    dump: Option<String>,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args)]
struct BatchArgs {
    /// Corpus path: a directory of <id>.hex files or a JSONL file.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    corpus_format: Option<CorpusFormatArg>,
    /// Output records file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: OutputFormat,
    /// Analysis worker threads.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// First-pass per-contract budget in seconds; 0 disables the cap.
    #[arg(long, default_value_t = obfuscan_core::ingest::DEFAULT_BUDGET_SECS)]
    budget_secs: u64,
    #[command(flatten)]
    features: FeatureFlags,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(4)
}

#[derive(Args)]
struct StatsArgs {
    /// Analysis records (JSONL).
    #[arg(long)]
    records: PathBuf,
    /// Snapshot output path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Identifier stamped into the snapshot.
    #[arg(long, default_value = "snapshot")]
    snapshot_id: String,
}

#[derive(Args)]
struct ScoreArgs {
    /// Analysis records (JSONL).
    #[arg(long)]
    records: PathBuf,
    /// Pinned statistics snapshot (JSON).
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct RankArgs {
    /// Scored records (JSONL or CSV, by extension).
    #[arg(long)]
    records: PathBuf,
    /// Explicit score cutoff for the prevalence split.
    #[arg(long, conflicts_with = "confidence")]
    cutoff: Option<f64>,
    /// Derive the cutoff from the scored set at this confidence level.
    #[arg(long)]
    confidence: Option<f64>,
    /// Size of the top listing.
    #[arg(long, default_value_t = 3000)]
    top: usize,
    /// Also write the top-K ids and scores to this file (one `id z` a line).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled feature CSV: id,f1,...,f7,label.
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Confidence level for the cutoff derived from labeled negatives.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// K for the ranking-overlap ablation (default: one tenth of the set).
    #[arg(long)]
    overlap_k: Option<usize>,
    /// Report output path (JSON); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment name stamped into the report.
    #[arg(long, default_value = "eval")]
    name: String,
}

#[derive(Args)]
struct FetchArgs {
    /// JSON-RPC endpoint; defaults to $ETH_RPC_URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// File with one 0x-prefixed address per line.
    #[arg(long)]
    addresses: PathBuf,
    /// Corpus output: directory (hex-dir) or .jsonl file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    corpus_format: Option<CorpusFormatArg>,
    #[arg(long, default_value = "latest")]
    block_tag: String,
}

fn main() {
    // die quietly when stdout is a closed pipe (e.g. `obfuscan ... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze(args) => commands::analyze(args),
        Command::Batch(args) => commands::batch(args),
        Command::Stats(args) => commands::stats(args),
        Command::Score(args) => commands::score(args),
        Command::Rank(args) => commands::rank(args),
        Command::Eval(args) => commands::eval(args),
        Command::Fetch(args) => commands::fetch(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
