//! Sample summaries with Monte Carlo standard errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Sample mean with the plug-in standard error `s / sqrt(N)`.
pub fn mean_stderr(values: &[f64]) -> Result<Estimate> {
    if values.is_empty() {
        return Err(Error::EmptySamples("mean"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
        n: values.len(),
    })
}

/// Unbiased sample variance with the large-sample standard error
/// `sqrt((m4 - s^4) / N)`.
pub fn variance_stderr(values: &[f64]) -> Result<Estimate> {
    if values.len() < 2 {
        return Err(Error::EmptySamples("variance"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let s2 = m2 * n / (n - 1.0);
    Ok(Estimate {
        value: s2,
        stderr: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
        n: values.len(),
    })
}

/// Linear-interpolation quantile (the common "type 7" rule).
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySamples("quantile"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

/// Quantile with a distribution-free standard error taken from the order
/// statistics bracketing a three-sigma binomial band around `p`.
pub fn quantile_stderr(values: &[f64], p: f64) -> Result<Estimate> {
    if values.is_empty() {
        return Err(Error::EmptySamples("quantile"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let half = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
    let lo = quantile_sorted(&sorted, p - half);
    let hi = quantile_sorted(&sorted, p + half);
    Ok(Estimate {
        value: quantile_sorted(&sorted, p),
        stderr: (hi - lo) / 6.0,
        n,
    })
}

pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
