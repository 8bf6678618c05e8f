//! Experiment harness: seeded instance generators, JSON configs, CSV
//! traces, the invariant suite and the `sparsegreedy` command line.

use std::path::Path;

use thiserror::Error;

pub mod config;
pub mod experiment;
pub mod instances;
pub mod io;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiment::{run_batch, run_experiment, ExperimentOutcome, InvariantTolerances};
pub use io::{Summary, Verdict};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Instance(#[from] instances::InstanceError),
    #[error(transparent)]
    Dictionary(#[from] sparsegreedy::DictionaryError),
    #[error(transparent)]
    Objective(#[from] sparsegreedy::ObjectiveError),
}

impl HarnessError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io(format!("{}: {e}", path.display()))
    }

    /// Usage-type errors map to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::MissingInput(_) | HarnessError::Parse(_))
    }
}
