//! `rcgan`: bound verification, synthetic data, training, evaluation and
//! label-fraction sweeps.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 verification failure.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod cmd;
mod config;
mod manifest;

#[derive(Parser)]
#[command(name = "rcgan", version, about = "Conditional GANs under missing and uncertain labels")]
struct Cli {
    /// Manifest path. Defaults to the main output with extension `.manifest.json`.
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the divergence bounds on random small discrete instances.
    VerifyBounds(cmd::verify::Args),
    /// Sample a labeled Gaussian mixture.
    GenData(cmd::data::GenArgs),
    /// Corrupt the labels of a clean dataset.
    Corrupt(cmd::data::CorruptArgs),
    /// Train a conditional generator.
    Train(cmd::train::Args),
    /// Score a checkpoint.
    Eval(cmd::eval::Args),
    /// Train and score one model per labeled fraction.
    Sweep(cmd::sweep::Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Artifacts were written but at least one item failed (exit 1).
    Incomplete,
    /// A verified property does not hold (exit 2).
    Failed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Incomplete => 1,
            Status::Failed => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let manifest = cli.manifest.as_deref();
    let result = match cli.command {
        Command::VerifyBounds(a) => cmd::verify::run(a, manifest),
        Command::GenData(a) => cmd::data::gen(a, manifest),
        Command::Corrupt(a) => cmd::data::corrupt(a, manifest),
        Command::Train(a) => cmd::train::run(a, manifest),
        Command::Eval(a) => cmd::eval::run(a, manifest),
        Command::Sweep(a) => cmd::sweep::run(a, manifest),
    };
    match result {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
