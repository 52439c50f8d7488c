use std::process::ExitCode;

use clap::Parser;
use mvseg::cli::{execute, exit_code, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mvseg: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
