//! Experiment harness for the `ebsrd-core` kernels: TOML configs, runs,
//! text artifacts and run comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod config;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{Experiment, Overrides};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const GEOMETRY: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] ebsrd_core::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: String, reason: String },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(e) if e.is_geometry() => exit::GEOMETRY,
            CliError::Core(_) => exit::NUMERIC,
            CliError::Io { .. } | CliError::Artifact { .. } => exit::IO,
        }
    }
}
