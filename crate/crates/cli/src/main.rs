mod analyze;
mod args;
mod datasets;
mod report;
mod simulate;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command, Threads};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = match &cli.command {
        Command::Analyze(a) => a.output.threads,
        Command::Simulate(s) => s.output.threads,
        Command::Datasets { .. } => Threads::Auto,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Threads::Count(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building worker pool")?;
    pool.install(|| match cli.command {
        Command::Analyze(a) => analyze::run(&a),
        Command::Simulate(s) => simulate::run(&s),
        Command::Datasets { action } => datasets::run(&action),
    })
}
