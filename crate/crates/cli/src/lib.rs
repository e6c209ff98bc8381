//! Command-line front end: argument parsing, the subcommands and the
//! acceptance suite.

pub mod acceptance;
pub mod args;
pub mod commands;

pub use args::{Cli, Command, Tier};
pub use commands::{build_graph, run, CliError};

/// Sizes the global rayon pool from `CUTOFF_THREADS` when it is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CUTOFF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CUTOFF_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Failure(e.to_string()))
}
