//! Benchmark, fault-injection and self-test driver for the `secgraph`
//! engine. Every command returns typed rows; `main` only writes them out.

pub mod build;
pub mod config;
pub mod report;
pub mod run;
pub mod selftest;

use std::fmt;

pub use build::{cmd_build, BuildRow};
pub use config::BenchConfig;
pub use run::{cmd_search, cmd_verify, RunRow};
pub use selftest::{cmd_selftest, SuiteOutcome};

/// Command failure, mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(anyhow::Error),
    Parse(String),
    /// A checked invariant did not hold.
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(e) => write!(f, "io error: {e:#}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

/// Converts an engine error raised by an honest run into an invariant failure.
pub(crate) fn engine(context: &str) -> impl FnOnce(secgraph::Error) -> CliError + '_ {
    move |e| CliError::Invariant(format!("{context}: {e}"))
}
