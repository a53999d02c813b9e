//! Configuration, property suites and commands behind the `pair-grpo` binary.

pub mod commands;
pub mod config;
pub mod verify;

pub use commands::CliError;
pub use config::{Config, ConfigError};
