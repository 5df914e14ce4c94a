//! Command-line front end for the evifuse toolkit: dataset synthesis and
//! ingestion, training the three LSTM load predictors, fusing their
//! forecasts with evidence combination, and emitting machine-readable
//! reports.
//!
//! The binary is a thin shell over this library; every subcommand is an
//! ordinary function here so the whole surface stays testable in-process.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{
    cmd_eval, cmd_fuse, cmd_run, cmd_synth, cmd_tables, cmd_train, parse_triple, ModelFile,
    RunOutput, TrainOutput, DEFAULT_TRIPLES,
};
pub use config::{ExperimentConfig, SEED_ENV_VAR};
pub use error::CliError;
pub use report::{EvaluationReport, REPRODUCIBILITY_NOTE};
