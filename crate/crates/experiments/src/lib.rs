//! Experiment drivers behind the `nngp-solve` command-line tool.
//!
//! Each command turns an [`ExperimentConfig`] into a [`Report`]: a
//! [`RunRecord`] with the acceptance checks plus plot-ready CSV tables.

pub mod commands;
pub mod config;
pub mod output;
pub mod record;

pub use commands::{run, Report};
pub use config::{Experiment, ExperimentConfig, Preset};
pub use record::{Check, RunRecord};
