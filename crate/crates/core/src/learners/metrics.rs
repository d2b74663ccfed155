use crate::error::{Error, Result};

/// Coefficient of determination `1 − SSE/SST`.
///
/// A constant `y_true` has SST = 0. The score is then 0 when the predictions
/// match up to rounding and `-inf` otherwise; callers treat a non-finite score
/// as a flagged split.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.len() < 2 {
        return Err(Error::InsufficientData("R² needs at least two points".into()));
    }
    let m = crate::data::mean(y_true);
    let sst: f64 = y_true.iter().map(|v| (v - m) * (v - m)).sum();
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum();
    if sst == 0.0 {
        let scale = y_true.iter().fold(0.0f64, |a, v| a.max(v.abs())) * f64::EPSILON;
        let allowance = y_true.len() as f64 * scale * scale;
        return Ok(if sse <= allowance { 0.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - sse / sst)
}

/// Fraction of mismatched label bits over all instances and labels.
pub fn hamming_loss(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> Result<f64> {
    check_labels(truth, pred)?;
    let total: usize = truth.iter().map(Vec::len).sum();
    let wrong: usize = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| t.iter().zip(p).filter(|(a, b)| a != b).count())
        .sum();
    Ok(wrong as f64 / total.max(1) as f64)
}

/// Fraction of instances whose whole label vector is predicted exactly.
pub fn subset_accuracy(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> Result<f64> {
    check_labels(truth, pred)?;
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len().max(1) as f64)
}

fn check_labels(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    for (t, p) in truth.iter().zip(pred) {
        if t.len() != p.len() {
            return Err(Error::LengthMismatch {
                expected: t.len(),
                actual: p.len(),
            });
        }
    }
    Ok(())
}
