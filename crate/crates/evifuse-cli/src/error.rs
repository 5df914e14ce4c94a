//! CLI error taxonomy and the exit-code contract: 0 success, 1 computation
//! failure, 2 input or configuration error.

use std::path::PathBuf;

use thiserror::Error;

use evifuse_core::{
    DatasetError, EvidenceError, ForecastError, FusionError, MetricsError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    /// Exit code for this failure. Anything the user can fix by changing
    /// inputs or configuration is a 2; failures arising inside an otherwise
    /// well-posed computation are a 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Write { .. } | CliError::Config(_) => 2,
            CliError::Dataset(_) => 2,
            CliError::Forecast(e) => match e {
                ForecastError::InvalidConfig(_) | ForecastError::BadCheckpoint(_) => 2,
                _ => 1,
            },
            CliError::Fusion(e) => match e {
                FusionError::Dataset(_)
                | FusionError::BadHorizon
                | FusionError::OriginNotFound(_)
                | FusionError::InsufficientHistory { .. }
                | FusionError::InsufficientFuture { .. }
                | FusionError::TooFewEvents(_)
                | FusionError::UnknownMode(_) => 2,
                FusionError::Forecast(f) => match f {
                    ForecastError::InvalidConfig(_) | ForecastError::BadCheckpoint(_) => 2,
                    _ => 1,
                },
                _ => 1,
            },
            CliError::Evidence(_) | CliError::Metrics(_) => 1,
        }
    }
}
