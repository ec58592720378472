mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use ssn_core::SsnError;

use args::Cli;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const NUMERICAL: u8 = 2;
    pub const VERIFICATION: u8 = 3;
}

/// Failure carrying the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: exit::USAGE,
            message: message.into(),
        }
    }
}

impl From<SsnError> for Failure {
    fn from(e: SsnError) -> Self {
        let code = match e {
            SsnError::DimensionMismatch { .. }
            | SsnError::IndexOutOfRange { .. }
            | SsnError::InvalidParameter { .. }
            | SsnError::Parse { .. }
            | SsnError::EmptyDataset
            | SsnError::InvalidLabel { .. }
            | SsnError::Io(_)
            | SsnError::Json(_) => exit::USAGE,
            _ => exit::NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
