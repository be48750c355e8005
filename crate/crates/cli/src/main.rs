use std::process::ExitCode;

use clap::Parser;

use sfwm_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.record());
            ExitCode::from(err.exit_code())
        }
    }
}
