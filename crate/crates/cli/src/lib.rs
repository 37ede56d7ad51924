//! Config-driven pipeline behind the `deepalloc` binary: ingest, train, backtest, compare and
//! report, with every artifact tagged by the hash of the config that produced it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod pipeline;

use std::path::PathBuf;

pub use config::{FlagOverrides, RunConfig, StrategyId};
pub use pipeline::{run, Command, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] deepalloc::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Mismatch(String),

    #[error("{} strategies failed: {}", .0.len(), .0.iter().map(|(s, e)| format!("{s}: {e}")).collect::<Vec<_>>().join("; "))]
    Strategies(Vec<(String, String)>),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
