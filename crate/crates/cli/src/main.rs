mod args;
mod commands;
mod data;
mod setup;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// A failed command; the exit code is derived from the error.
pub struct Failure(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.into())
    }
}

/// 2 for failures during estimation, 1 for everything the user can fix by
/// changing the input or flags.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use cuwls::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Estimation(_) | E::Singular { .. } | E::NoConvergence { .. } | E::Unsupported(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result: Result<(), Failure> = match &cli.command {
        Command::Simulate(a) => commands::simulate(a).map_err(Failure),
        Command::Fit(a) => commands::fit(a, "fit"),
        Command::Gof(a) => commands::fit(a, "gof"),
        Command::Study(a) => commands::study(a).map_err(Failure),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(e)) => {
            let broken_pipe = e
                .chain()
                .filter_map(|c| c.downcast_ref::<std::io::Error>())
                .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
            if broken_pipe {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
