//! Experiment front end: configuration, reproducible pipelines and
//! artifact writers behind the `wiretap` binary.

pub mod commands;
pub mod config;
pub mod grid;
pub mod output;
pub mod pipeline;
pub mod plot;

use thiserror::Error;
use wiretap_core::autodiff::AutodiffError;
use wiretap_core::evaluation::EvalError;
use wiretap_core::mi::MiError;
use wiretap_core::models::ModelError;
use wiretap_core::oracle::OracleError;
use wiretap_core::source::SourceError;
use wiretap_core::training::TrainError;

/// Environment variable naming the root directory for all outputs.
pub const OUT_ENV: &str = "WIRETAP_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or request.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    /// Training diverged, a gradient check failed or an estimator broke down.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<AutodiffError> for CliError {
    fn from(e: AutodiffError) -> Self {
        match e {
            AutodiffError::NonFinite(_) | AutodiffError::NonFiniteGradient(_) => CliError::Numeric(e.to_string()),
            AutodiffError::Io(io) => io.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Autodiff(a) => a.into(),
            TrainError::Model(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Autodiff(a) => a.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<MiError> for CliError {
    fn from(e: MiError) -> Self {
        match e {
            MiError::EstimationFailed(_) => CliError::Numeric(e.to_string()),
            MiError::Autodiff(a) => a.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(t) => t.into(),
            EvalError::Mi(m) => m.into(),
            EvalError::Model(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        match e {
            SourceError::Io(io) => io.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Usage(e.to_string())
    }
}
