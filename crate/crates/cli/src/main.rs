//! `cfsd`: ingest review data, train the debiasing model, sweep beta,
//! analyse bias and run significance tests.
//!
//! Exit codes: 0 success, 1 computation failure, 2 usage or I/O error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use cfsd::data::Split;
use cfsd::stats::{Alternative, WilcoxonMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Relative input paths are resolved against this directory when set.
pub const DATA_ROOT_ENV: &str = "CFSD_DATA_ROOT";

#[derive(Parser, Debug)]
#[command(name = "cfsd", version, about = "Counterfactual sentiment debiasing for review-based rating prediction")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed override (wins over the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SourceType {
    Amazon,
    Yelp,
    /// Source is a synthetic-generator config (JSON).
    Synthetic,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse, k-core filter, index and split a review dataset.
    Ingest {
        #[arg(long)]
        source: PathBuf,
        #[arg(long = "type", value_enum)]
        source_type: SourceType,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Train,val,test proportions.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        max_tokens: Option<usize>,
    },
    /// Train a model on a corpus and save the selected checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Evaluate every beta in the sweep set.
    SweepBeta {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        /// Select by `MSE + lambda (BU + BI)` instead of MSE.
        #[arg(long)]
        tradeoff_lambda: Option<f64>,
        /// Lexicon TSV (word, polarity); defaults to the bundled one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Bias report for one beta.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Clip debiased ratings to [1, 5].
        #[arg(long)]
        clip: bool,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Wilcoxon signed-rank test on paired CSV columns (`a - b`), or on a
    /// single column of differences.
    Wilcoxon {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: Option<String>,
        #[arg(long, default_value = "greater")]
        alternative: Alternative,
        #[arg(long, default_value = "normal")]
        mode: WilcoxonMode,
    },
    /// Generate a synthetic corpus with known sentiment bias.
    GenSynth {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        per_user: Option<usize>,
        #[arg(long)]
        bias_strength: Option<f64>,
        #[arg(long)]
        max_tokens: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
