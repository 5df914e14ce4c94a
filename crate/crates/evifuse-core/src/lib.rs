//! Evidential fusion of short-term load forecasts.
//!
//! Three LSTM predictors with different feature views forecast hourly load;
//! their recent accuracy over lagged evaluation windows becomes
//! Dempster-Shafer evidence, combined into a decision about which predictors
//! to trust for the next horizon. The fused forecast averages the selected
//! predictors.
//!
//! Modules:
//! - [`evidence`]: frames, subsets, mass functions, combination rules
//! - [`forecast`]: LSTM cells, BPTT training, gradient checking
//! - [`dataset`]: CSV load data, normalization, feature construction, synth
//! - [`fusion`]: accuracy scoring, evidence construction, decision + fusion
//! - [`metrics`]: MAE / MAPE evaluation

pub mod dataset;
pub mod evidence;
pub mod forecast;
pub mod fusion;
pub mod metrics;

pub use dataset::{
    DatasetError, InputConfig, NormalizationSpec, Record, Sample, SampleSet, CSV_HEADER,
};
pub use evidence::{BeliefInterval, EvidenceError, Frame, MassFunction, Subset};
pub use forecast::{
    Checkpoint, ForecastError, LayerState, LstmParams, LstmState, TrainOutcome, TrainingConfig,
};
pub use fusion::{
    DecisionMatrix, EventWindow, FusionDecision, FusionError, FusionMode, PredictorId,
};
pub use metrics::MetricsError;
