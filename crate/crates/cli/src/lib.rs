//! Command-line front end for `pcm-core`.
//!
//! Every command returns an [`Output`]: the text written to stdout and
//! whether a verification check failed. Reports are `key=value` lines in
//! blank-line separated sections; tabular data is CSV with a header row.

pub mod args;
pub mod bench;
pub mod commands;
pub mod input;
pub mod probe;
pub mod report;
pub mod verify;

use pcm_core::Error;

pub use args::{Cli, Command};

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
/// A verification check failed.
pub const EXIT_VERIFY_FAILED: i32 = 1;
/// Bad flags or flag values.
pub const EXIT_USAGE: i32 = 2;
/// Unreadable or malformed files, or input the model cannot accept.
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Core(Error::InvalidArgument(_)) => EXIT_USAGE,
            Self::Core(_) => EXIT_INPUT,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Core(Error::Io(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub stdout: String,
    pub failed: bool,
}

impl Output {
    pub fn ok(stdout: String) -> Self {
        Self { stdout, failed: false }
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed {
            EXIT_VERIFY_FAILED
        } else {
            EXIT_OK
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<Output> {
    match &cli.command {
        Command::Serialize(a) => commands::serialize(a),
        Command::Forward(a) => commands::forward(a),
        Command::Verify(a) => Ok(verify::run(a)),
        Command::Bench(a) => commands::bench(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Probe(a) => commands::probe(a),
    }
}
