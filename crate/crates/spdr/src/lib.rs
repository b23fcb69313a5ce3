//! Command-line front end: configuration, checkpoints, output files and the
//! subcommands built on `spdr-core`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod model;
pub mod output;

pub use error::{CliError, Result};
