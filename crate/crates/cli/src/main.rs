use std::process::ExitCode;

use clap::Parser;
use hsmm_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli
        .config(|k| std::env::var(k).ok())
        .and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
