//! Configuration handling and subcommands for the `fucb-lab` binary.

pub mod commands;
pub mod config;

pub use commands::{CliError, DemoLbArgs, Overrides};
pub use config::{ConfigError, EnvironmentSpec, ExperimentConfig};
