//! Runner for the DA torus suite: configuration, the five commands, the
//! verdict table and the output files.

pub mod config;
pub mod output;
pub mod run;
pub mod verdict;

pub use config::RunConfig;
pub use run::{Command, Report};
pub use verdict::{Verdict, VerdictStatus};

use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    /// An inner module failed; `code` is module-qualified, e.g. `chain.lost_recurrent_set`.
    #[error("{code}: {message}")]
    Internal { code: String, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Internal { .. } | CliError::Io { .. } => 4,
        }
    }

    pub fn internal(code: &str, e: impl std::fmt::Display) -> Self {
        CliError::Internal { code: code.to_string(), message: e.to_string() }
    }
}

macro_rules! from_module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::internal(e.code(), &e)
            }
        }
    )*};
}

from_module_error!(
    datorus::anosov::AnosovError,
    datorus::surgery::SurgeryError,
    datorus::shadow::ShadowError,
    datorus::chain::GraphError,
    datorus::torus::TorusError
);
