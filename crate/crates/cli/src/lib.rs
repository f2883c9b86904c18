//! Experiment drivers, configuration and the `bohmstab` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
