//! `simtrack`: solves, sweeps, landscapes and trajectories as CSV artifacts.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.

mod args;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use run::Failure;

fn init_logging() {
    let level = std::env::var("SIMTRACK_LOG").unwrap_or_else(|_| "error".into());
    let filter = match level.as_str() {
        "error" | "info" | "debug" => level.as_str(),
        other => {
            eprintln!("warning: SIMTRACK_LOG={other} not one of error, info, debug; using error");
            "error"
        }
    };
    env_logger::Builder::new()
        .parse_filters(filter)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging();
    match run::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
