//! `chgat` command-line tool: build character graphs, train and evaluate
//! gender predictors, run predictions, and print dataset statistics.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chgat::cli::{self, CommandResult};

#[derive(Parser)]
#[command(name = "chgat", about = "Chinese name-gender prediction toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the heterogeneous character graphs and print their sizes.
    BuildGraph {
        /// Character decomposition table (TSV).
        #[arg(long)]
        chars: PathBuf,
        /// Destination for the optional JSON-lines graph dump.
        #[arg(long)]
        out: PathBuf,
        /// Write the graph dump to --out.
        #[arg(long)]
        dump: bool,
    },
    /// Train a model and write checkpoint, history, grid results, and a
    /// run manifest.
    Train {
        /// Name-gender CSV (`name,male,female`).
        #[arg(long)]
        names: PathBuf,
        /// Character decomposition table (TSV).
        #[arg(long)]
        chars: PathBuf,
        /// Flat `key = value` config file.
        #[arg(long)]
        config: PathBuf,
        /// Model to train.
        #[arg(long, value_parser = ["full", "variant_1", "variant_2", "nb"])]
        variant: String,
        /// Output directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on a name dataset.
    Eval {
        /// Checkpoint (network) or CSV (naive bayes) model file.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        names: PathBuf,
    },
    /// Predict the gender of one or more names.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Names to classify, in order.
        #[arg(long = "name", required = true)]
        names: Vec<String>,
    },
    /// Print dataset statistics (M-to-F ratio, combination flips).
    Stats {
        #[arg(long)]
        names: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let CommandResult { exit_code, summary } = match cli.command {
        Command::BuildGraph { chars, out, dump } => cli::cmd_build_graph(&chars, &out, dump),
        Command::Train { names, chars, config, variant, out } => {
            cli::cmd_train(&names, &chars, &config, &variant, &out)
        }
        Command::Eval { model, names } => cli::cmd_eval(&model, &names),
        Command::Predict { model, names } => cli::cmd_predict(&model, &names),
        Command::Stats { names } => cli::cmd_stats(&names),
    };
    print!("{summary}");
    ExitCode::from(exit_code as u8)
}
