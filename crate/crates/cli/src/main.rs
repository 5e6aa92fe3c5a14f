//! `arelu` command-line tool.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{splice_config, Cli};
use commands::UsageError;

fn main() -> ExitCode {
    let argv = match splice_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match commands::run(&cli) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nsee `arelu {} --help`", cli.command.name());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
