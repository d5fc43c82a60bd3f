//! File formats, configuration and subcommands around `pathsgd-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod datafile;
pub mod error;
pub mod metrics;

pub use error::CliError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VERIFY_FAILED: i32 = 2;
    pub const DIVERGED: i32 = 3;
}
