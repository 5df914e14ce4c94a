//! Evidence-based fusion of the three load predictors.
//!
//! For a chosen origin hour, each predictor is scored on three lagged
//! five-hour evaluation windows (events). Per event, the three accuracy
//! scores normalize into a basic probability assignment over the predictor
//! frame `{V1, V2, V3}`; the three assignments combine into one, and the
//! subset with maximal combined mass selects which predictors' forecasts are
//! averaged over the coming horizon.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    normalize, sample_features, DatasetError, InputConfig, NormalizationSpec, Record,
};
use crate::evidence::{EvidenceError, Frame, MassFunction, Subset};
use crate::forecast::{ForecastError, LstmParams};

/// Samples per evaluation window.
pub const EVENT_WINDOW_LEN: usize = 5;

/// Hours of history consumed by the three evaluation windows together.
pub const EVENT_LOOKBACK: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("evaluation window needs {EVENT_WINDOW_LEN} predictions and actuals, got {predictions} and {actuals}")]
    WrongWindowLength { predictions: usize, actuals: usize },
    #[error("actual load at {timestamp} is not positive, accuracy undefined")]
    ZeroActualLoad { timestamp: i64 },
    #[error("all predictor accuracies are zero, no evidence to assign")]
    AllZeroAccuracies,
    #[error("fusion needs at least two events, got {0}")]
    TooFewEvents(usize),
    #[error("forecast horizon must be positive")]
    BadHorizon,
    #[error("no record at origin timestamp {0}")]
    OriginNotFound(i64),
    #[error("expected {expected} horizon steps of predictions, got {found}")]
    HorizonMismatch { expected: usize, found: usize },
    #[error("origin at index {origin_index} needs {needed} hours of history before it")]
    InsufficientHistory { origin_index: usize, needed: usize },
    #[error("horizon of {horizon} hours past index {origin_index} exceeds the {len} available records")]
    InsufficientFuture {
        origin_index: usize,
        horizon: usize,
        len: usize,
    },
    #[error("unknown fusion mode `{0}`, expected `disjunctive` or `conjunctive`")]
    UnknownMode(String),
}

/// The three predictors, distinguished by their feature views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorId {
    /// Previous hour's load and weather.
    V1,
    /// Previous hour's load with the target hour's weather.
    V2,
    /// A multi-hour window of all columns.
    V3,
}

impl PredictorId {
    pub const ALL: [PredictorId; 3] = [PredictorId::V1, PredictorId::V2, PredictorId::V3];

    /// Position in predictor arrays (0-based).
    pub fn index(&self) -> usize {
        match self {
            PredictorId::V1 => 0,
            PredictorId::V2 => 1,
            PredictorId::V3 => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PredictorId::V1 => "V1",
            PredictorId::V2 => "V2",
            PredictorId::V3 => "V3",
        }
    }

    /// The feature view this predictor trains and predicts with.
    pub fn input_config(&self, window: usize) -> InputConfig {
        match self {
            PredictorId::V1 => InputConfig::LagParams,
            PredictorId::V2 => InputConfig::CurrentParams,
            PredictorId::V3 => InputConfig::Windowed { window },
        }
    }
}

/// The frame of discernment over the three predictors.
pub fn predictor_frame() -> Frame {
    Frame::new(["V1", "V2", "V3"]).expect("three distinct elements")
}

/// The three lagged evaluation windows, newest first.
///
/// Offsets count hours back from the origin: `E1` covers the five hours
/// immediately before it, `E2` the five before those, `E3` the five before
/// those.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventWindow {
    E1,
    E2,
    E3,
}

impl EventWindow {
    pub const ALL: [EventWindow; 3] = [EventWindow::E1, EventWindow::E2, EventWindow::E3];

    /// Hour offsets before the origin covered by this window.
    pub fn offsets(&self) -> RangeInclusive<usize> {
        match self {
            EventWindow::E1 => 1..=5,
            EventWindow::E2 => 6..=10,
            EventWindow::E3 => 11..=15,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EventWindow::E1 => "E1",
            EventWindow::E2 => "E2",
            EventWindow::E3 => "E3",
        }
    }
}

/// Which combination rule fuses the event evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Disjunctive,
    Conjunctive,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Disjunctive => "disjunctive",
            FusionMode::Conjunctive => "conjunctive",
        })
    }
}

impl FromStr for FusionMode {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "disjunctive" => Ok(FusionMode::Disjunctive),
            "conjunctive" => Ok(FusionMode::Conjunctive),
            other => Err(FusionError::UnknownMode(other.to_string())),
        }
    }
}

/// Accuracy of one predictor over one evaluation window.
///
/// Each sample scores `100 - |prediction - actual| / actual * 100`, floored
/// at zero; the window accuracy is the mean of the five sample scores.
/// Actual loads must be positive.
pub fn predictor_accuracy(
    predictions_kw: &[f64],
    actuals_kw: &[f64],
) -> Result<f64, FusionError> {
    if predictions_kw.len() != EVENT_WINDOW_LEN || actuals_kw.len() != EVENT_WINDOW_LEN {
        return Err(FusionError::WrongWindowLength {
            predictions: predictions_kw.len(),
            actuals: actuals_kw.len(),
        });
    }
    let mut sum = 0.0;
    for (p, a) in predictions_kw.iter().zip(actuals_kw) {
        if *a <= 0.0 {
            return Err(FusionError::ZeroActualLoad { timestamp: 0 });
        }
        sum += (100.0 - (p - a).abs() / a * 100.0).max(0.0);
    }
    Ok(sum / EVENT_WINDOW_LEN as f64)
}

/// Turns one event's three accuracy scores into a mass over the singletons,
/// in proportion to accuracy.
pub fn event_mass(accuracies: &[f64; 3], frame: &Frame) -> Result<MassFunction, FusionError> {
    if accuracies.iter().all(|a| *a == 0.0) {
        return Err(FusionError::AllZeroAccuracies);
    }
    let assignments: Vec<(Subset, f64)> = PredictorId::ALL
        .iter()
        .map(|id| Ok((frame.singleton(id.label())?, accuracies[id.index()])))
        .collect::<Result<_, EvidenceError>>()?;
    Ok(MassFunction::new(frame, &assignments, true)?)
}

/// Folds the event masses together, oldest argument first.
pub fn fuse_events(
    events: &[MassFunction],
    mode: FusionMode,
) -> Result<MassFunction, FusionError> {
    if events.len() < 2 {
        return Err(FusionError::TooFewEvents(events.len()));
    }
    let mut acc = events[0].clone();
    for next in &events[1..] {
        acc = match mode {
            FusionMode::Disjunctive => acc.combine_disjunctive(next)?,
            FusionMode::Conjunctive => acc.combine_conjunctive(next)?,
        };
    }
    Ok(acc)
}

/// One cell of a combination audit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    /// Focal set of the accumulated (first) evidence.
    pub col: String,
    /// Focal set of the incoming (second) evidence.
    pub row: String,
    /// Union or intersection the product lands on; `"∅"` marks conflict.
    pub merged: String,
    pub product: f64,
}

/// Cross-product audit of one combination step: every pair of focal sets,
/// their product, and where the product lands. Products sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMatrix {
    pub mode: FusionMode,
    pub cells: Vec<MatrixCell>,
    /// Product mass landing on the empty set (always zero for disjunctive).
    pub conflict: f64,
}

/// Tabulates one combination step without performing it. Rows follow the
/// second operand's focal sets, columns the first's.
pub fn decision_matrix(
    first: &MassFunction,
    second: &MassFunction,
    mode: FusionMode,
) -> Result<DecisionMatrix, FusionError> {
    if first.frame() != second.frame() {
        return Err(EvidenceError::FrameMismatch.into());
    }
    let mut cells = Vec::new();
    let mut conflict = 0.0;
    for (row_set, row_mass) in second.focal_sets() {
        for (col_set, col_mass) in first.focal_sets() {
            let merged = match mode {
                FusionMode::Disjunctive => col_set.union(&row_set)?,
                FusionMode::Conjunctive => col_set.intersection(&row_set)?,
            };
            let product = col_mass * row_mass;
            if merged.is_empty() {
                conflict += product;
            }
            cells.push(MatrixCell {
                col: col_set.label(),
                row: row_set.label(),
                merged: merged.label(),
                product,
            });
        }
    }
    Ok(DecisionMatrix {
        mode,
        cells,
        conflict,
    })
}

/// Average of the selected predictors' forecasts.
pub fn fused_prediction(selected: &Subset, predictions_kw: &[f64; 3]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for id in PredictorId::ALL {
        if selected.contains(id.label()) {
            sum += predictions_kw[id.index()];
            count += 1;
        }
    }
    debug_assert!(count > 0, "argmax never selects the empty subset");
    sum / count as f64
}

/// Applies a combined mass to per-step predictor forecasts: picks the
/// maximal-mass subset and averages its members at every step.
///
/// `horizon_predictions[k]` holds the three predictors' forecasts for step
/// `k + 1`; its length must equal `expected_horizon` (24 in the default
/// pipeline).
pub fn decide_and_fuse(
    combined: &MassFunction,
    horizon_predictions: &[[f64; 3]],
    expected_horizon: usize,
) -> Result<(Subset, Vec<f64>), FusionError> {
    if horizon_predictions.len() != expected_horizon {
        return Err(FusionError::HorizonMismatch {
            expected: expected_horizon,
            found: horizon_predictions.len(),
        });
    }
    let selected = combined.argmax_subset();
    let fused = horizon_predictions
        .iter()
        .map(|p| fused_prediction(&selected, p))
        .collect();
    Ok((selected, fused))
}

/// One forecast hour of a fusion decision.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPoint {
    pub timestamp: i64,
    pub actual_kw: f64,
    /// Per-predictor forecasts, indexed by [`PredictorId::index`].
    pub predictions_kw: [f64; 3],
    pub fused_kw: f64,
}

/// Outcome of [`run_fusion`]: the evidence trail and the fused horizon.
#[derive(Debug, Clone)]
pub struct FusionDecision {
    pub origin_timestamp: i64,
    pub mode: FusionMode,
    /// `event_accuracies[event][predictor]`, percent.
    pub event_accuracies: [[f64; 3]; 3],
    pub event_masses: Vec<MassFunction>,
    /// Audit of each combination stage (one fewer than the events).
    pub matrices: Vec<DecisionMatrix>,
    pub combined: MassFunction,
    pub selected: Subset,
    pub horizon: Vec<HorizonPoint>,
}

fn predict_kw(
    model: &LstmParams,
    normalized: &[Record],
    t: usize,
    config: InputConfig,
    norm: &NormalizationSpec,
) -> Result<f64, ForecastError> {
    let features = sample_features(normalized, t, config);
    Ok(norm.denormalize_load(model.predict(&features)?))
}

/// Scores, fuses, decides, and forecasts for one origin hour.
///
/// `models` holds the trained parameters for V1, V2, and V3 in order; V3's
/// feature window is `window`. `records` is the raw (kW) table and `norm`
/// the scaling fit on its training slice; evaluation windows and the horizon
/// use actual records for features, so each hour is predicted one step
/// ahead. The horizon covers `origin + 1 ..= origin + horizon`.
pub fn run_fusion(
    models: &[LstmParams; 3],
    records: &[Record],
    norm: &NormalizationSpec,
    window: usize,
    origin_timestamp: i64,
    horizon: usize,
    mode: FusionMode,
) -> Result<FusionDecision, FusionError> {
    if horizon == 0 {
        return Err(FusionError::BadHorizon);
    }
    let origin_index = records
        .iter()
        .position(|r| r.timestamp == origin_timestamp)
        .ok_or(FusionError::OriginNotFound(origin_timestamp))?;
    let needed = EVENT_LOOKBACK + window;
    if origin_index < needed {
        return Err(FusionError::InsufficientHistory {
            origin_index,
            needed,
        });
    }
    if origin_index + horizon >= records.len() {
        return Err(FusionError::InsufficientFuture {
            origin_index,
            horizon,
            len: records.len(),
        });
    }

    let (normalized, _) = normalize(records, Some(norm))?;
    let frame = predictor_frame();
    let configs: [InputConfig; 3] = [
        PredictorId::V1.input_config(window),
        PredictorId::V2.input_config(window),
        PredictorId::V3.input_config(window),
    ];

    let mut event_accuracies = [[0.0f64; 3]; 3];
    let mut event_masses = Vec::with_capacity(3);
    for (e, event) in EventWindow::ALL.iter().enumerate() {
        // ascending time within the window
        let targets: Vec<usize> = event
            .offsets()
            .rev()
            .map(|offset| origin_index - offset)
            .collect();
        let actuals: Vec<f64> = targets.iter().map(|&t| records[t].load_kw).collect();
        for (t, &a) in targets.iter().zip(&actuals) {
            if a <= 0.0 {
                return Err(FusionError::ZeroActualLoad {
                    timestamp: records[*t].timestamp,
                });
            }
        }
        for id in PredictorId::ALL {
            let preds: Vec<f64> = targets
                .iter()
                .map(|&t| predict_kw(&models[id.index()], &normalized, t, configs[id.index()], norm))
                .collect::<Result<_, ForecastError>>()?;
            event_accuracies[e][id.index()] = predictor_accuracy(&preds, &actuals)?;
        }
        event_masses.push(event_mass(&event_accuracies[e], &frame)?);
    }

    let mut matrices = Vec::with_capacity(event_masses.len() - 1);
    let mut acc = event_masses[0].clone();
    for next in &event_masses[1..] {
        matrices.push(decision_matrix(&acc, next, mode)?);
        acc = match mode {
            FusionMode::Disjunctive => acc.combine_disjunctive(next)?,
            FusionMode::Conjunctive => acc.combine_conjunctive(next)?,
        };
    }
    let combined = acc;

    let mut horizon_predictions = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let t = origin_index + k;
        let mut predictions_kw = [0.0f64; 3];
        for id in PredictorId::ALL {
            predictions_kw[id.index()] =
                predict_kw(&models[id.index()], &normalized, t, configs[id.index()], norm)?;
        }
        horizon_predictions.push(predictions_kw);
    }
    let (selected, fused) = decide_and_fuse(&combined, &horizon_predictions, horizon)?;
    let horizon_points = horizon_predictions
        .into_iter()
        .zip(fused)
        .enumerate()
        .map(|(k, (predictions_kw, fused_kw))| HorizonPoint {
            timestamp: records[origin_index + k + 1].timestamp,
            actual_kw: records[origin_index + k + 1].load_kw,
            predictions_kw,
            fused_kw,
        })
        .collect();

    Ok(FusionDecision {
        origin_timestamp,
        mode,
        event_accuracies,
        event_masses,
        matrices,
        combined,
        selected,
        horizon: horizon_points,
    })
}
