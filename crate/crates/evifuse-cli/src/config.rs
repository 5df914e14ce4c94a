//! Experiment configuration: defaults, flat key-value config files, and the
//! layering rules (file, then flags, then the `EVIFUSE_SEED` environment
//! variable for the seed).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use evifuse_core::dataset::parse_timestamp;
use evifuse_core::FusionMode;

use crate::CliError;

/// Name of the environment variable that overrides the experiment seed.
pub const SEED_ENV_VAR: &str = "EVIFUSE_SEED";

/// Everything one experiment needs, resolvable from defaults, a config file,
/// command-line flags, and the environment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Hourly CSV to ingest; `None` generates synthetic data instead.
    pub data: Option<PathBuf>,
    /// Seed for synthetic data; predictor training seeds derive from it.
    pub seed: u64,
    /// Hours of synthetic data when no input file is given.
    pub synth_hours: usize,
    /// Leading fraction of records used for fitting and training.
    pub train_fraction: f64,
    /// Feature window of the third predictor, in hours.
    pub window: usize,
    /// Forecast horizon past the origin, in hours.
    pub horizon: usize,
    /// Fusion origin as a Unix timestamp; `None` picks the latest hour that
    /// still leaves a full horizon of actuals.
    pub origin: Option<i64>,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub truncation_length: Option<usize>,
    pub clip_norm: Option<f64>,
    pub mode: FusionMode,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: 7,
            synth_hours: 504,
            train_fraction: 0.8,
            window: 5,
            horizon: 24,
            origin: None,
            hidden_size: 16,
            num_layers: 1,
            epochs: 200,
            learning_rate: 0.05,
            truncation_length: None,
            clip_norm: None,
            mode: FusionMode::Disjunctive,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("bad value for `{key}`: {e}")))
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError>
where
    T::Err: fmt::Display,
{
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Unknown keys are errors so that a
    /// typo cannot silently fall back to a default.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data" => {
                self.data = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "seed" => self.seed = parse_value(key, value)?,
            "synth_hours" => self.synth_hours = parse_value(key, value)?,
            "train_fraction" => self.train_fraction = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "horizon" => self.horizon = parse_value(key, value)?,
            "origin" => {
                self.origin = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse_timestamp(value).ok_or_else(|| {
                        CliError::Config(format!("bad value for `origin`: `{value}`"))
                    })?)
                }
            }
            "hidden_size" => self.hidden_size = parse_value(key, value)?,
            "num_layers" => self.num_layers = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "truncation_length" => self.truncation_length = parse_optional(key, value)?,
            "clip_norm" => self.clip_norm = parse_optional(key, value)?,
            "mode" => {
                self.mode = value
                    .parse()
                    .map_err(|e| CliError::Config(format!("bad value for `mode`: {e}")))?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => {
                return Err(CliError::Config(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Reads a flat config file: one `key = value` per line, `#` comments,
    /// blank lines ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{}: expected `key = value`, found `{line}`",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.apply_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies the `EVIFUSE_SEED` override, which outranks both the config
    /// file and the `--seed` flag.
    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(value) = std::env::var(SEED_ENV_VAR) {
            self.seed = value.parse().map_err(|_| {
                CliError::Config(format!("bad value for `{SEED_ENV_VAR}`: `{value}`"))
            })?;
        }
        Ok(())
    }

    /// Cheap structural validation before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be positive".into()));
        }
        if self.window < 2 {
            return Err(CliError::Config(format!(
                "window {} must be at least 2",
                self.window
            )));
        }
        Ok(())
    }

    /// Training settings for one predictor. Each predictor trains under its
    /// own deterministic seed so their initializations differ.
    pub fn training_config(&self, predictor_index: usize) -> evifuse_core::TrainingConfig {
        evifuse_core::TrainingConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            hidden_size: self.hidden_size,
            num_layers: self.num_layers,
            seed: self.seed + predictor_index as u64,
            truncation_length: self.truncation_length,
            clip_norm: self.clip_norm,
        }
    }
}
