mod args;
mod commands;
mod render;

use std::process::ExitCode;

use anyhow::anyhow;
use clap::Parser;

use args::{Cli, Command};
use commands::Failure;

/// Caps the worker pool when `ARE_THREADS` is set.
fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("ARE_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Usage(anyhow!(
            "ARE_THREADS must be a positive integer, got {value:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.into()))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Evolve(a) => commands::evolve_cmd(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
