//! Command-line front end: campaigns, strategy comparisons and CSV replay.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_compare, cmd_replay, cmd_run, CompareSummary, ReplayKind, ReplayOptions};
pub use config::{ConfigSource, RunConfig};
pub use error::{CliError, CliResult};

/// Caps worker threads from `BOED_THREADS` if set. Invalid values are a
/// config error.
pub fn apply_thread_limit() -> CliResult<()> {
    match std::env::var("BOED_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Config(format!("BOED_THREADS must be a positive integer, got `{v}`")))?;
            boed_core::exec::set_global_threads(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}
