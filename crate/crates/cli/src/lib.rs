//! Command-line driver for the sleepgmu pipeline: config parsing, dataset
//! artifacts, raw-recording ingestion and the subcommands.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod input;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sleepgmu::trainer::AblationVariant;
use sleepgmu::Result;

use commands::SplitChoice;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "sleepgmu", version, about = "Multimodal sleep staging with gated fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run config; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw CSV recordings into a dataset artifact.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Directory with signals.csv and labels.csv, or subdirectories of them.
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate a planted-signature dataset artifact.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train on a dataset artifact; also reports test-split metrics.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on one split of a dataset artifact.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitChoice,
    },
    /// Write class probabilities for every epoch of a dataset artifact.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and test several channel/fusion variants on one split.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Extra variant as `name=ch1+ch2:gmu|concat`; repeatable.
        #[arg(long = "variant")]
        variants: Vec<String>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let load = |c: &Common| RunConfig::load(c.config.as_deref(), c.seed);
    match cli.command {
        Command::Preprocess { common, input } => commands::preprocess(&load(&common)?, &input, &common.out),
        Command::Synth { common } => commands::synth(&load(&common)?, &common.out),
        Command::Train { common, data } => commands::train_cmd(&load(&common)?, &data, &common.out),
        Command::Eval { common, data, checkpoint, split } => {
            commands::eval_cmd(&load(&common)?, common.seed, &data, &checkpoint, split, &common.out)
        }
        Command::Predict { common, data, checkpoint } => {
            commands::predict_cmd(&load(&common)?, &data, &checkpoint, &common.out)
        }
        Command::Ablate { common, data, variants } => {
            let extra = variants
                .iter()
                .map(|v| AblationVariant::parse(v))
                .collect::<Result<Vec<_>>>()?;
            commands::ablate_cmd(&load(&common)?, &extra, &data, &common.out)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| sleepgmu::Error::Config(e.to_string()))?;
    run(cli)
}
