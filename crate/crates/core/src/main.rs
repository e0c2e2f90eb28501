use std::process::ExitCode;

use clap::Parser;
use maskforge::cli::{run, Cli};

fn main() -> ExitCode {
    maskforge::parallel::init_threads_from_env();
    let cli = Cli::parse();
    match run(cli).map_err(anyhow::Error::from) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
