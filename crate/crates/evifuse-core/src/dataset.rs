//! Hourly load dataset: CSV parsing, normalization, feature construction,
//! chronological splitting, and a seeded synthetic generator.
//!
//! Records are strictly hourly. Parsing validates monotonicity and physical
//! ranges; normalization is min-max per column with statistics fit on
//! whatever slice the caller designates as training data, so evaluation
//! rows never influence the scaling.

use chrono::{DateTime, NaiveDateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Required CSV header, byte for byte.
pub const CSV_HEADER: &str = "timestamp,load_kw,temperature_c,humidity_pct,wind_speed_ms";

/// Seconds per record step.
pub const STEP_SECONDS: i64 = 3600;

/// Minimum record count accepted by the synthetic generator.
pub const MIN_SYNTH_HOURS: usize = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("line 1: expected header `{CSV_HEADER}`, found `{0}`")]
    BadHeader(String),
    #[error("line {line}: expected 5 comma-separated fields, found {found}")]
    WrongFieldCount { line: usize, found: usize },
    #[error("line {line}: could not parse {field} from `{value}`")]
    BadField {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: timestamp does not advance by exactly one hour (gap of {gap} s)")]
    NonHourlyStep { line: usize, gap: i64 },
    #[error("line {line}: {field} = {value} is outside its physical range")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: f64,
    },
    #[error("dataset holds {found} records, at least {needed} are required")]
    TooFewRecords { found: usize, needed: usize },
    #[error("window length must be at least 2, got {0}")]
    WindowTooShort(usize),
    #[error("train fraction {0} must lie in (0, 1)")]
    BadTrainFraction(f64),
    #[error("synthetic generator needs at least {MIN_SYNTH_HOURS} hours, got {0}")]
    TooFewSynthHours(usize),
}

/// One hourly observation. `timestamp` is Unix seconds (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub timestamp: i64,
    pub load_kw: f64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub wind_speed_ms: f64,
}

/// Parses a timestamp in RFC 3339 (`2021-01-01T00:00:00Z`), naive ISO
/// (`2021-01-01T00:00:00`, read as UTC), or integer Unix-seconds form.
pub fn parse_timestamp(text: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.timestamp());
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S") {
        return Some(naive.and_utc().timestamp());
    }
    text.parse::<i64>().ok()
}

/// Formats Unix seconds as RFC 3339 UTC (`2021-01-01T00:00:00Z`).
pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Parses the full CSV text. Errors carry 1-based line numbers.
pub fn parse_csv(text: &str) -> Result<Vec<Record>, DatasetError> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim_end()).unwrap_or("");
    if header != CSV_HEADER {
        return Err(DatasetError::BadHeader(header.to_string()));
    }

    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1; // enumerate is 0-based over lines
        let trimmed = raw.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(DatasetError::WrongFieldCount {
                line,
                found: fields.len(),
            });
        }
        let timestamp = parse_timestamp(fields[0]).ok_or_else(|| DatasetError::BadField {
            line,
            field: "timestamp",
            value: fields[0].to_string(),
        })?;
        let parse_f64 = |field: &'static str, value: &str| -> Result<f64, DatasetError> {
            value
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::BadField {
                    line,
                    field,
                    value: value.to_string(),
                })
        };
        let record = Record {
            timestamp,
            load_kw: parse_f64("load_kw", fields[1])?,
            temperature_c: parse_f64("temperature_c", fields[2])?,
            humidity_pct: parse_f64("humidity_pct", fields[3])?,
            wind_speed_ms: parse_f64("wind_speed_ms", fields[4])?,
        };
        if record.load_kw < 0.0 {
            return Err(DatasetError::OutOfRange {
                line,
                field: "load_kw",
                value: record.load_kw,
            });
        }
        if !(0.0..=100.0).contains(&record.humidity_pct) {
            return Err(DatasetError::OutOfRange {
                line,
                field: "humidity_pct",
                value: record.humidity_pct,
            });
        }
        if record.wind_speed_ms < 0.0 {
            return Err(DatasetError::OutOfRange {
                line,
                field: "wind_speed_ms",
                value: record.wind_speed_ms,
            });
        }
        if let Some(prev) = records.last() {
            let prev: &Record = prev;
            let gap = record.timestamp - prev.timestamp;
            if gap != STEP_SECONDS {
                return Err(DatasetError::NonHourlyStep { line, gap });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes records back to CSV. Floats use the shortest round-trip form.
pub fn write_csv(records: &[Record]) -> String {
    let mut out = String::with_capacity(records.len() * 48 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_timestamp(r.timestamp),
            r.load_kw,
            r.temperature_c,
            r.humidity_pct,
            r.wind_speed_ms
        ));
    }
    out
}

/// Min-max range of one column, fit on training data only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        Self { min, max }
    }

    /// Maps `value` into `[0, 1]`. A constant column maps everywhere to 0.5,
    /// which carries no information and cannot divide by zero.
    pub fn normalize(&self, value: f64) -> f64 {
        if self.max > self.min {
            (value - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }

    /// Inverse of [`normalize`](Self::normalize). For a constant column every
    /// normalized value maps back to that constant.
    pub fn denormalize(&self, value: f64) -> f64 {
        if self.max > self.min {
            self.min + value * (self.max - self.min)
        } else {
            self.min
        }
    }
}

/// Per-column scaling statistics for the four numeric columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub load: ColumnRange,
    pub temperature: ColumnRange,
    pub humidity: ColumnRange,
    pub wind_speed: ColumnRange,
}

impl NormalizationSpec {
    /// Fits ranges on the given records (the caller passes the training slice).
    pub fn fit(records: &[Record]) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::TooFewRecords {
                found: 0,
                needed: 1,
            });
        }
        Ok(Self {
            load: ColumnRange::fit(records.iter().map(|r| r.load_kw)),
            temperature: ColumnRange::fit(records.iter().map(|r| r.temperature_c)),
            humidity: ColumnRange::fit(records.iter().map(|r| r.humidity_pct)),
            wind_speed: ColumnRange::fit(records.iter().map(|r| r.wind_speed_ms)),
        })
    }

    pub fn normalize_record(&self, r: &Record) -> Record {
        Record {
            timestamp: r.timestamp,
            load_kw: self.load.normalize(r.load_kw),
            temperature_c: self.temperature.normalize(r.temperature_c),
            humidity_pct: self.humidity.normalize(r.humidity_pct),
            wind_speed_ms: self.wind_speed.normalize(r.wind_speed_ms),
        }
    }

    /// Maps a normalized load prediction back to kW.
    pub fn denormalize_load(&self, value: f64) -> f64 {
        self.load.denormalize(value)
    }
}

/// Normalizes all records. With `spec = None` the statistics are fit on
/// `records` itself; pass a spec fit on the training slice to scale
/// evaluation data without leaking its range.
pub fn normalize(
    records: &[Record],
    spec: Option<&NormalizationSpec>,
) -> Result<(Vec<Record>, NormalizationSpec), DatasetError> {
    let spec = match spec {
        Some(s) => *s,
        None => NormalizationSpec::fit(records)?,
    };
    let normalized = records.iter().map(|r| spec.normalize_record(r)).collect();
    Ok((normalized, spec))
}

/// Splits chronologically at `floor(n * fraction)`: everything before the
/// cut trains, everything from the cut on evaluates.
pub fn split(records: &[Record], fraction: f64) -> Result<(&[Record], &[Record]), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::BadTrainFraction(fraction));
    }
    let cut = (records.len() as f64 * fraction).floor() as usize;
    Ok(records.split_at(cut))
}

/// Feature view of one predictor.
///
/// All three target the load at hour `t` from strictly earlier (or, for the
/// exogenous weather in `CurrentParams`, contemporaneous) information:
///
/// - `LagParams`: previous hour's load and weather, one step
/// - `CurrentParams`: previous hour's load, this hour's weather, one step
/// - `Windowed { window }`: the last `window` hours of all four columns,
///   oldest first
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputConfig {
    LagParams,
    CurrentParams,
    Windowed { window: usize },
}

impl InputConfig {
    /// Records of history consumed before the first predictable hour.
    pub fn history_len(&self) -> usize {
        match self {
            InputConfig::LagParams | InputConfig::CurrentParams => 1,
            InputConfig::Windowed { window } => *window,
        }
    }

    /// Length of each feature vector (always the four data columns).
    pub fn input_size(&self) -> usize {
        4
    }

    /// Sequence length fed to the network per sample.
    pub fn sequence_len(&self) -> usize {
        match self {
            InputConfig::LagParams | InputConfig::CurrentParams => 1,
            InputConfig::Windowed { window } => *window,
        }
    }
}

/// One training/evaluation sample: a feature sequence and its target load
/// (both in normalized units).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<Vec<f64>>,
    pub target: f64,
    pub target_timestamp: i64,
}

/// Samples plus the configuration and scaling that produced them.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub config: InputConfig,
    pub norm: NormalizationSpec,
}

/// Builds samples from normalized records.
///
/// The sample targeting record `t` exists for `t in history_len..n`, so the
/// three configurations yield `n-1`, `n-1`, and `n-window` samples.
pub fn build_samples(
    records: &[Record],
    config: InputConfig,
    norm: &NormalizationSpec,
) -> Result<SampleSet, DatasetError> {
    if let InputConfig::Windowed { window } = config {
        if window < 2 {
            return Err(DatasetError::WindowTooShort(window));
        }
    }
    let history = config.history_len();
    if records.len() <= history {
        return Err(DatasetError::TooFewRecords {
            found: records.len(),
            needed: history + 1,
        });
    }

    let mut samples = Vec::with_capacity(records.len() - history);
    for t in history..records.len() {
        samples.push(Sample {
            features: sample_features(records, t, config),
            target: records[t].load_kw,
            target_timestamp: records[t].timestamp,
        });
    }
    Ok(SampleSet {
        samples,
        config,
        norm: *norm,
    })
}

/// Feature sequence for the sample targeting record `t` (normalized units).
pub fn sample_features(records: &[Record], t: usize, config: InputConfig) -> Vec<Vec<f64>> {
    match config {
        InputConfig::LagParams => {
            let p = &records[t - 1];
            vec![vec![
                p.load_kw,
                p.temperature_c,
                p.humidity_pct,
                p.wind_speed_ms,
            ]]
        }
        InputConfig::CurrentParams => {
            let p = &records[t - 1];
            let c = &records[t];
            vec![vec![
                p.load_kw,
                c.temperature_c,
                c.humidity_pct,
                c.wind_speed_ms,
            ]]
        }
        InputConfig::Windowed { window } => (0..window)
            .map(|j| {
                // oldest first: offsets window..1 before the target
                let r = &records[t - window + j];
                vec![r.load_kw, r.temperature_c, r.humidity_pct, r.wind_speed_ms]
            })
            .collect(),
    }
}

/// Generates a deterministic synthetic hourly series.
///
/// Load follows daily and weekly cycles plus a temperature response and
/// AR(1) noise; weather columns follow their own diurnal shapes. The same
/// `(seed, hours)` pair always yields byte-identical records.
pub fn synth_generate(seed: u64, hours: usize) -> Result<Vec<Record>, DatasetError> {
    if hours < MIN_SYNTH_HOURS {
        return Err(DatasetError::TooFewSynthHours(hours));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_ts = 1_609_459_200i64; // 2021-01-01T00:00:00Z
    let tau = std::f64::consts::TAU;

    let mut records = Vec::with_capacity(hours);
    let (mut n_temp, mut n_hum, mut n_wind, mut n_load) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let ar = |state: &mut f64, rng: &mut ChaCha8Rng| {
        *state = 0.9 * *state + 0.3 * rng.random_range(-1.0..1.0);
        *state
    };
    for h in 0..hours {
        let hf = h as f64;
        let nt = ar(&mut n_temp, &mut rng);
        let nh = ar(&mut n_hum, &mut rng);
        let nw = ar(&mut n_wind, &mut rng);
        let nl = ar(&mut n_load, &mut rng);

        let temperature_c =
            16.0 + 7.0 * (tau * (hf - 9.0) / 24.0).sin() + 2.0 * (tau * hf / 720.0).sin()
                + 1.5 * nt;
        let humidity_pct = (62.0 + 20.0 * (tau * (hf + 4.0) / 24.0).sin() + 6.0 * nh)
            .clamp(0.0, 100.0);
        let wind_speed_ms = (4.5 + 2.0 * (tau * (hf - 2.0) / 24.0 + 0.7).sin() + 1.2 * nw).max(0.0);
        let load_kw = (130.0
            + 55.0 * (tau * (hf - 17.0) / 24.0).sin()
            + 18.0 * (tau * hf / 168.0).sin()
            + 0.9 * (temperature_c - 16.0)
            + 4.0 * nl)
            .max(0.0);

        records.push(Record {
            timestamp: base_ts + h as i64 * STEP_SECONDS,
            load_kw,
            temperature_c,
            humidity_pct,
            wind_speed_ms,
        });
    }
    Ok(records)
}
