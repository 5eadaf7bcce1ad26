mod args;
mod commands;
mod manifest;
mod range;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use commands::{dispatch, rerun_command, write_manifest};

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(command: Command) -> Result<u8> {
    let mut command = match command {
        Command::Rerun(a) => rerun_command(&a.manifest, a.out_dir)?,
        c => c,
    };
    let outcome = dispatch(&mut command)?;
    let dir = command.out_dir_mut().map(|d| d.clone()).unwrap_or_default();
    let path = write_manifest(&command, &outcome, &dir)?;
    log::info!("manifest written to {}", path.display());
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
