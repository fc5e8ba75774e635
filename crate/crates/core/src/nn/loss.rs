use crate::error::{Error, Result};

/// Squared error `(y - s)^2` for a single pair, with `dL/ds`.
pub fn squared_error(score: f64, label: f64) -> (f64, f64) {
    let diff = label - score;
    (diff * diff, -2.0 * diff)
}

/// Mean squared error over a batch of scores and ±1 labels.
pub fn mse_loss(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset("empty batch".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| squared_error(s, y).0)
        .sum();
    Ok(total / scores.len() as f64)
}
