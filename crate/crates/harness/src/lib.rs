//! Experiment orchestration: configuration, synthetic markets, seeded
//! baseline-versus-planner runs over horizon / R² / variant grids, result
//! tables and SVG value curves.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod report;
pub mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentResults};
pub use synthetic::{generate_synthetic, SyntheticMarketSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("results: {0}")]
    Results(String),
    #[error(transparent)]
    Data(#[from] planfolio_core::marketdata::DataError),
    #[error(transparent)]
    Forecast(#[from] planfolio_core::forecast::ForecastError),
    #[error(transparent)]
    Policy(#[from] planfolio_core::policy::PolicyError),
    #[error(transparent)]
    Pilot(#[from] planfolio_core::pilot::PilotError),
    #[error(transparent)]
    Env(#[from] planfolio_core::env::EnvError),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}
