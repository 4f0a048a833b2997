//! `ecgcl`: prepare data, train teachers/students/baselines, evaluate and
//! reproduce the lead-count results table.

mod commands;
mod exit;
mod reproduce;
mod run_args;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{
    EvalArgs, ExportArgs, PrepareArgs, StudentArgs, SynthArgs, TrainArgs,
};
use crate::reproduce::ReproduceArgs;

#[derive(Debug, Parser)]
#[command(name = "ecgcl", version, about = "Reduced-lead ECG classification with teacher embedding alignment")]
struct Cli {
    /// More log output (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest a PTB-XL directory into a normalized corpus cache.
    Prepare(PrepareArgs),
    /// Generate a synthetic corpus cache.
    Synth(SynthArgs),
    /// Step 1: train the 12-lead teacher.
    TrainTeacher(TrainArgs),
    /// Cache the teacher's embeddings for student training.
    ExportEmbeddings(ExportArgs),
    /// Step 2: train a reduced-lead student under the frozen teacher classifier.
    TrainStudent(StudentArgs),
    /// Train a reduced-lead model end to end (no teacher).
    TrainBaseline(TrainArgs),
    /// Evaluate a checkpoint on the eval fold.
    Eval(EvalArgs),
    /// Run the full protocol over all lead subsets and seeds.
    ReproduceTable(ReproduceArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();

    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Synth(a) => commands::synth(a),
        Command::TrainTeacher(a) => commands::train_teacher(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
        Command::TrainStudent(a) => commands::train_student(a),
        Command::TrainBaseline(a) => commands::train_baseline(a),
        Command::Eval(a) => commands::eval(a),
        Command::ReproduceTable(a) => reproduce::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err))
        }
    }
}
