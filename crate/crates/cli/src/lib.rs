//! `readlab`: one binary for dataset validation, feature export, generalist
//! and personalized labeling runs, the consistency audit and report
//! aggregation.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 gateway error. All randomness comes from `--seed`.

mod commands;
mod config;
mod failure;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

pub use config::{FileConfig, Settings};
pub use failure::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "readlab",
    version,
    about = "Personalized code readability assessment workbench"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand. Each overrides the same key in `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Seed for every random choice (fold split, random shots, pair sampling) [default: 0]
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// TOML file of `key = value` settings; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Labeling backend: `stub:<policy>` or `remote` [default: stub:majority-echo]
    #[arg(long, global = true, value_name = "SPEC")]
    pub gateway: Option<String>,
    /// Developers evaluated in parallel [default: 1]
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Directory every output file is written under [default: readlab-out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Model name sent to the remote backend
    #[arg(long, global = true, value_name = "NAME")]
    pub model: Option<String>,
    /// Chat-completion URL of the remote backend
    #[arg(long, global = true, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Extra requests after a reply without exactly one label word [default: 2]
    #[arg(long, global = true, value_name = "N")]
    pub parse_retries: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a dataset directory and print its shape
    Validate {
        /// Dataset directory (manifest.json, ratings.csv, snippets/)
        dataset: PathBuf,
    },
    /// Snippet feature tables
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Labeling protocols
    #[command(subcommand)]
    Run(RunCommand),
    /// Inspect shot selection
    #[command(subcommand)]
    Shots(ShotsCommand),
    /// Dataset consistency audit
    #[command(subcommand)]
    Consistency(ConsistencyCommand),
    /// Cross-developer summaries
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
pub enum FeaturesCommand {
    /// Write features.csv with one row per snippet
    Export {
        /// Dataset directory
        dataset: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneralistMethod {
    /// Feature classifier, 10-fold, trained on the other developers' majority
    Feature,
    /// Zero-shot prompt through the gateway
    Llm,
    /// Most common label per snippet
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ssa {
    /// Highest variance among the other developers
    Hv,
    /// Highest variance per label the developer used
    Hvl,
    /// Uniform random
    R,
}

#[derive(Debug, Subcommand)]
pub enum RunCommand {
    /// Score one developer-independent predictor against every developer
    Generalist {
        /// Dataset directory
        dataset: PathBuf,
        /// Predictor to evaluate
        #[arg(long, value_enum)]
        method: GeneralistMethod,
        /// Leave the evaluated developer out of the oracle's vote
        #[arg(long)]
        oracle_exclusive: bool,
    },
    /// Few-shot personalized labeling for every developer
    Personalized {
        /// Dataset directory
        dataset: PathBuf,
        /// Shot selection algorithm
        #[arg(long, value_enum)]
        ssa: Ssa,
    },
}

#[derive(Debug, Subcommand)]
pub enum ShotsCommand {
    /// Print one developer's shot set as JSON
    Show {
        /// Dataset directory
        dataset: PathBuf,
        /// Shot selection algorithm
        #[arg(long, value_enum)]
        ssa: Ssa,
        /// Developer id
        #[arg(long)]
        developer: String,
        /// Also print every evaluation prompt with its SHA-256
        #[arg(long)]
        prompts: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConsistencyCommand {
    /// Draw snippet pairs rated by one developer; writes pairs.json
    Sample {
        /// Dataset directory
        dataset: PathBuf,
        /// Number of pairs
        #[arg(long, default_value_t = 384)]
        pairs: usize,
        /// Never draw the same unordered snippet pair twice
        #[arg(long)]
        unique: bool,
    },
    /// Judge pairs interactively; appends to verdicts-<annotator>.jsonl and resumes
    Annotate {
        /// Dataset directory
        dataset: PathBuf,
        /// pairs.json from `consistency sample`
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Annotator id recorded with every verdict
        #[arg(long)]
        annotator: String,
        /// merged.json whose pending pairs are the only ones shown (tiebreak pass)
        #[arg(long, value_name = "FILE")]
        only_pending: Option<PathBuf>,
    },
    /// Combine two annotators' verdicts and tiebreaks; writes merged.json
    Merge {
        /// First annotator's verdict file
        #[arg(long, value_name = "FILE")]
        first: PathBuf,
        /// Second annotator's verdict file
        #[arg(long, value_name = "FILE")]
        second: PathBuf,
        /// Tiebreak verdict file for the disagreements
        #[arg(long, value_name = "FILE")]
        tiebreak: Option<PathBuf>,
    },
    /// Inconsistency rate of a fully resolved merge; writes consistency-report.json
    Report {
        /// merged.json from `consistency merge`
        #[arg(long, value_name = "FILE")]
        merged: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Mean table and F1 distributions over developer report files
    Aggregate {
        /// Report JSON files, or directories of them
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

pub fn command() -> clap::Command {
    Cli::command()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(Failure::usage(e.render().to_string()));
        }
    };
    let settings = Settings::resolve(&cli.common)?;
    commands::dispatch(&cli.command, &settings)
}
