use crate::error::{Error, Result};

/// Max-subtracted softmax in double precision.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let Some(max) = logits.iter().copied().reduce(f64::max) else {
        return Ok(Vec::new());
    };
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}
