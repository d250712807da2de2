//! Experiment runner for the gevml toolkit: configuration, experiments, reports and the selftest suite.

pub mod config;
pub mod experiments;
pub mod report;
pub mod selftest;

use std::fmt;

pub use config::{parse_config, Config, ConfigInvalid};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigInvalid),
    Core(gevml_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigInvalid> for CliError {
    fn from(e: ConfigInvalid) -> Self {
        CliError::Config(e)
    }
}

impl From<gevml_core::Error> for CliError {
    fn from(e: gevml_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
