//! Command-line front end: phantom generation, splitting, training,
//! evaluation, counterfactual explanation, rater agreement, and the encoder
//! depth sweep. All outputs land under the configured output directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hemiscan_cli::commands;
use hemiscan_cli::config::RunConfig;
use hemiscan_core::Result;

#[derive(Parser)]
#[command(name = "hemiscan", version, about = "Synthetic half-brain stroke-detection workbench")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accepted for interface compatibility; execution is always
    /// single-threaded so results stay bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scan corpus.
    Gen,
    /// Partition scans into train/val/test by patient.
    Split,
    /// Train models on the generated corpus.
    Train {
        /// 1 (half-brain pretraining), 2 (multi-task fine-tuning),
        /// baseline (full-brain), ae (explanation autoencoder), or all.
        #[arg(long)]
        stage: String,
    },
    /// Classification metrics and subgroup tables on a split.
    Eval {
        #[arg(long, default_value = "mtl")]
        model: String,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Counterfactual attribution maps for predicted-positive test scans.
    Explain {
        #[arg(long, default_value = "mtl")]
        model: String,
    },
    /// Krippendorff's alpha between a reference rater and all others.
    Agree {
        /// Long-format CSV (unit,rater,category); bundled expert ratings
        /// are used when omitted.
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long, default_value = "Model")]
        reference: String,
        /// Raters to drop before scoring (repeatable).
        #[arg(long, default_values_t = [String::from("IST-3")])]
        exclude: Vec<String>,
    },
    /// Retrain stage 1 at several encoder depths.
    Sweep {
        /// Comma-separated depths; defaults to every depth of the
        /// configured filter stack.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
    },
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
    match &cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Split => commands::split(&cfg),
        Command::Train { stage } => commands::train(&cfg, stage),
        Command::Eval { model, split } => commands::eval(&cfg, model, split),
        Command::Explain { model } => commands::explain(&cfg, model),
        Command::Agree {
            ratings,
            reference,
            exclude,
        } => commands::agree(&cfg, ratings.as_deref(), reference, exclude),
        Command::Sweep { depths } => {
            let depths = depths
                .clone()
                .unwrap_or_else(|| (1..=cfg.model.arch.filters.len()).collect());
            commands::sweep(&cfg, &depths)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
