//! Forecast error metrics.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series are empty")]
    Empty,
    #[error("predicted series holds {predicted} values, actual holds {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("actual value at index {0} is zero, percentage error undefined")]
    ZeroActual(usize),
}

fn check(predicted: &[f64], actual: &[f64]) -> Result<(), MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean absolute error: `mean(|predicted - actual|)`.
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    check(predicted, actual)?;
    let sum: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Mean absolute percentage error: `mean(|predicted - actual| / |actual|) * 100`.
pub fn mape(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    check(predicted, actual)?;
    let mut sum = 0.0;
    for (idx, (p, a)) in predicted.iter().zip(actual).enumerate() {
        if *a == 0.0 {
            return Err(MetricsError::ZeroActual(idx));
        }
        sum += ((p - a) / a).abs();
    }
    Ok(sum / predicted.len() as f64 * 100.0)
}
