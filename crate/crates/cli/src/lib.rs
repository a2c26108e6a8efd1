//! Pipeline driver behind the `ppnn` binary: run configuration, the
//! `gen-data` / `train` / `compare` / `coarse` stages and SVG charts.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use config::{PdeChoice, RunConfig, System};
pub use error::{exit, CliError};
