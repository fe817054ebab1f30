mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    ClassifyArgs, Exp1Args, Exp2Args, IngestArgs, ReportArgs, SynthArgs, TensionArgs, TrainArgs,
};

const USAGE_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 1;

/// Chord embeddings and harmonic tension experiments on symbolic scores.
#[derive(Debug, Parser)]
#[command(name = "htension", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse scores into a corpus archive of slices, vocabulary and sequences.
    Ingest(IngestArgs),
    /// Train a CBOW embedding on every sequence of an archive.
    Train(TrainArgs),
    /// Write per-unit tension estimates as CSV.
    Tension(TensionArgs),
    /// Write the chord classification of every unit as CSV.
    Classify(ClassifyArgs),
    /// Chord-category experiment with cross-validated models.
    Exp1(Exp1Args),
    /// Cadence experiment with cross-validated models.
    Exp2(Exp2Args),
    /// Summarize experiment test reports as markdown.
    Report(ReportArgs),
    /// Write a synthetic kern corpus with cadence annotations.
    Synth(SynthArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let config = match &cli.command {
        Command::Train(a) => Some(&a.config),
        Command::Tension(a) => Some(&a.config),
        Command::Classify(a) => Some(&a.config),
        Command::Exp1(a) => Some(&a.config),
        Command::Exp2(a) => Some(&a.config),
        Command::Ingest(_) | Command::Report(_) | Command::Synth(_) => None,
    };
    let cfg = match config.map(config::ConfigArgs::resolve).transpose() {
        Ok(cfg) => cfg.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train_model(a, &cfg),
        Command::Tension(a) => commands::tension(a, &cfg),
        Command::Classify(a) => commands::classify(a, &cfg),
        Command::Exp1(a) => commands::exp1(a, &cfg),
        Command::Exp2(a) => commands::exp2(a, &cfg),
        Command::Report(a) => commands::report(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}
