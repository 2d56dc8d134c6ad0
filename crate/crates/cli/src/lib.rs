//! `gzsl` command-line front end: synthetic data, training, evaluation,
//! ablation grids and gradient audits.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 runtime or numeric failure.

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub mod ablate;
pub mod args;
mod commands;
pub mod manifest;
pub mod output;
pub mod svg;

pub use ablate::{table_rows, train_then_sweep, CellResult};
pub use commands::report_json;
pub use args::{Cli, Command};
pub use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Verification(String),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] gzsl_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) | CliError::Core(gzsl_core::Error::Config(_)) => 2,
            _ => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr, results to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match commands::dispatch(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
