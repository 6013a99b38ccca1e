//! `awd`: train, extend, and evaluate word-dilution augmentation runs.
//!
//! Exit codes: 0 on success, 2 for usage/config/data problems, 3 when
//! training hits a numerical failure.

mod commands;
mod manifest;
mod runs;
mod settings;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "awd", version, about = "Adversarial word dilution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train a classifier (baseline or adversarial) and write a run directory.
    Train(commands::train::TrainArgs),
    /// Compute dilution weights and augmentations for new examples with a
    /// frozen model.
    Augment(commands::augment::AugmentArgs),
    /// Evaluate checkpoints: accuracy, hardness, or per-word weight reports.
    Eval(commands::eval::EvalArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Augment(args) => commands::augment::run(args),
        Command::Eval(args) => commands::eval::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<awd::Error>() {
            if matches!(e, awd::Error::Numerical { .. } | awd::Error::NonFinite(_)) {
                return 3;
            }
        }
    }
    2
}
