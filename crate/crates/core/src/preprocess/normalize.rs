use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Statistics used by [`normalize_standardize`]. `mu` and `sigma` describe
/// the min-max scaled values, not the raw input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: f64,
    pub max: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Min-max scales every element to `[0, 1]`, then standardises the result to
/// zero mean and unit population standard deviation.
///
/// A constant input carries no information and maps to all zeros with
/// `sigma = 0`.
pub fn normalize_standardize(a: &Tensor) -> Result<(Tensor, NormalizationParams)> {
    if !a.all_finite() {
        return Err(Error::Input("cannot normalise non-finite values".into()));
    }
    let min = a.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        let params = NormalizationParams { min, max, mu: 0.0, sigma: 0.0 };
        return Ok((Tensor::zeros(a.shape()), params));
    }
    let scaled: Vec<f64> = a.data().iter().map(|&v| (v - min) / range).collect();
    let n = scaled.len() as f64;
    let mu = scaled.iter().sum::<f64>() / n;
    let sigma = (scaled.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
    let params = NormalizationParams { min, max, mu, sigma };
    if sigma == 0.0 {
        return Ok((Tensor::zeros(a.shape()), params));
    }
    let out = scaled.iter().map(|v| (v - mu) / sigma).collect();
    Ok((Tensor::new(a.shape().to_vec(), out)?, params))
}
