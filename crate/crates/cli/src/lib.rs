//! Experiment driver around `flowcap-core`: config files, orchestration of
//! solves, simulations, sweeps and capacity searches, figure datasets, and a
//! self-check suite. All output is deterministic CSV.

pub mod config;
pub mod csv;
mod error;
pub mod reproduce;
pub mod run;
pub mod validate;

pub use error::{CliError, ExitCode, Location, Result};
