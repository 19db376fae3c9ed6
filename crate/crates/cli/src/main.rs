//! `mpark` command-line driver.

mod args;
mod commands;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use commands::{dispatch, Context};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let config = match serde_json::to_value(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let ctx = Context {
        out: cli.out.clone(),
        name: cli.name.clone().unwrap_or_else(|| cli.command.name().to_string()),
        seed: cli.seed,
        verbose: cli.verbose,
        config,
    };
    match dispatch(&cli.command, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
