mod args;
mod commands;
mod manifest;
mod model;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::commands::CliError;

const THREADS_VAR: &str = "GAMMA_GLM_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = configure_threads().and_then(|()| commands::run(cli.command));
    match outcome {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gamma-glm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
