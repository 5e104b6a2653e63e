//! Experiment runner for the `aoi` binary: TOML experiment configs,
//! parallel replications and CSV tables with reproducible headers.

pub mod commands;
pub mod config;
pub mod error;
pub mod simulate;
pub mod table;

pub use error::{CliError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "AOI_OUT_DIR";
