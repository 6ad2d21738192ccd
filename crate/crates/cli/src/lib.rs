//! Configuration, checkpoints, dataset files, training and the command
//! implementations behind the `iddm` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod fixture;
pub mod train;

pub use error::{CliError, Result};
