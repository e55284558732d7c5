use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

/// Bad invocation: exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "gqla", version, about = "Learn, evaluate and compare short binary block codes")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a parity-check matrix.
    Train(TrainArgs),
    /// BLER curve of a code file.
    Eval(EvalArgs),
    /// Sample random codes and record their BLER as JSON lines.
    RandomSearch(RandomSearchArgs),
    /// Quantile tables and density ranking from random-search records.
    CdfStats(CdfStatsArgs),
    /// Probability that random search with the same budget beats each learned code.
    Compare(CompareArgs),
    /// Girth and degree histograms.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// key = value file; see README for keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override or add a key, e.g. `--set alpha=2.7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for code.json, training_log.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub code: PathBuf,
    /// `start:stop:step` (inclusive) or a single value, in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub ebno: String,
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    /// Target relative CI half-width.
    #[arg(long, default_value_t = 0.1)]
    pub rel: f64,
    #[arg(long)]
    pub max_blocks: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Send the all-zero codeword instead of encoded random messages.
    #[arg(long)]
    pub all_zero: bool,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RandomSearchArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub density: f64,
    #[arg(long)]
    pub count: u64,
    #[arg(long, allow_hyphen_values = true)]
    pub ebno: String,
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub rel: f64,
    #[arg(long)]
    pub max_blocks: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON-lines output.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep existing records in `--out` and draw only the missing ones.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct CdfStatsArgs {
    /// Record files; records are grouped by (n, k, density).
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
    /// Eb/N0 of the distribution; defaults to the largest present.
    #[arg(long, allow_hyphen_values = true)]
    pub ebno: Option<f64>,
    /// Quantile table CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Density ranking CSV.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Empirical CDF points `density,bler,cdf`.
    #[arg(long)]
    pub cdf: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Learned code files.
    #[arg(required = true)]
    pub codes: Vec<PathBuf>,
    /// Random-search records forming the reference distribution.
    #[arg(long)]
    pub random: Vec<PathBuf>,
    /// Density to select when the records hold several.
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub ebno: f64,
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub rel: f64,
    #[arg(long)]
    pub max_blocks: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Update count for codes whose metadata lacks one.
    #[arg(long)]
    pub updates: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Code files (`.json`) or random-search records (`.jsonl`). Several inputs are averaged.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Usage("--workers must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    match cli.command {
        Command::Train(a) => commands::train(&a, cli.workers),
        Command::Eval(a) => commands::eval(&a, cli.workers),
        Command::RandomSearch(a) => commands::random_search(&a, cli.workers),
        Command::CdfStats(a) => commands::cdf_stats(&a),
        Command::Compare(a) => commands::compare(&a, cli.workers),
        Command::Analyze(a) => commands::analyze(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
