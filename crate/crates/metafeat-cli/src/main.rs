//! Command-line driver for the meta-feature pipelines.
//!
//! Every command is a pure function of (inputs, configuration, seed): the
//! primary outputs are byte-identical across repeated runs, and each run
//! writes a resolved copy of its configuration next to its outputs.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 1 otherwise.

mod commands;
mod dataio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Configuration problems exit with code 2; everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Run(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "metafeat",
    about = "Schema-agnostic dataset meta-features and warm-start hyperparameter optimization",
    version
)]
struct Cli {
    /// Master seed (overrides the config file value).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON config file for the subcommand; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config file value).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy meta-dataset of 2-D classification datasets.
    GenToy(commands::GenToyArgs),
    /// Train the batch-similarity model on a dataset directory.
    Train(commands::TrainArgs),
    /// Evaluate pairwise classification accuracy on balanced batch pairs.
    EvalPairs(commands::EvalPairsArgs),
    /// Extract batch-averaged meta-features for every dataset.
    Extract(commands::ExtractArgs),
    /// Project a meta-feature CSV to 2-D via classical MDS.
    EmbedMds(commands::EmbedMdsArgs),
    /// Generate a synthetic surrogate corpus (datasets + evaluation tables).
    SynthSurrogate(commands::SynthSurrogateArgs),
    /// Run warm-start HPO comparisons over a surrogate corpus.
    Hpo(commands::HpoArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = commands::Common {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
    };
    let result = match cli.command {
        Command::GenToy(args) => commands::gen_toy(args, &common),
        Command::Train(args) => commands::train(args, &common),
        Command::EvalPairs(args) => commands::eval_pairs(args, &common),
        Command::Extract(args) => commands::extract(args, &common),
        Command::EmbedMds(args) => commands::embed_mds(args, &common),
        Command::SynthSurrogate(args) => commands::synth_surrogate(args, &common),
        Command::Hpo(args) => commands::hpo(args, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
