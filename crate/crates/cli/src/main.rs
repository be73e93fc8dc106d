mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unate::Error;

#[derive(Parser)]
#[command(
    name = "unate",
    version,
    about = "Self-supervised atomic embeddings for crystal graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse CIF / JSON-lines inputs into a normalized dataset with graph statistics.
    Ingest(commands::IngestArgs),
    /// Pretrain the encoder with both branches.
    Pretrain(commands::PretrainArgs),
    /// Export the per-element embedding table from a checkpoint.
    Extract(commands::ExtractArgs),
    /// Train and evaluate property regression for one mode and label fraction.
    Downstream(commands::DownstreamArgs),
    /// Label-fraction sweep comparing baseline and pretrained featurizers.
    Sweep(commands::DownstreamArgs),
    /// 2-D PCA coordinates of an embedding table.
    Project(commands::ProjectArgs),
    /// Generate a synthetic labelled dataset.
    Synth(commands::SynthArgs),
}

/// 1: I/O and ingest failures, 2: invalid input, 3: numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        Error::Parse(_) | Error::Validation(_) | Error::Shape(_) | Error::Featurization(_) => 2,
        Error::Numerics(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Extract(a) => commands::extract(a),
        Command::Downstream(a) => commands::downstream(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Project(a) => commands::project(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
