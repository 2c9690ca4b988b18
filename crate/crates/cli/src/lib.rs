//! Command-line driver: frame I/O, configuration, outputs and preview
//! around the `papertab` pipeline.

pub mod config;
pub mod error;
pub mod frames;
pub mod output;
pub mod preview;
pub mod run;
pub mod synth;
pub mod y4m;

pub use error::{CliError, CliResult};
