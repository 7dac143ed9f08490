//! Experiment harness: configuration, chain dispatch and CSV/JSON output.
//!
//! Every experiment is a grid of (dataset size, replicate, sampler) runs.
//! Runs are independent and seeded from `(seed, stream)` pairs, so results
//! do not depend on the thread count.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{Epsilon, ExperimentConfig, ExperimentKind};
pub use experiment::{run_experiment, ExperimentOutput, Failure, RunRecord};
pub use output::write_outputs;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cda_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
