//! Small statistics helpers: log-log slope fits, medians, moments.

use crate::error::{Error, Result};

/// Least-squares fit of `log(value)` against `log(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN with fewer than three points).
    pub stderr: f64,
}

/// Fit a power law `value ~ c * n^slope` through `(n, value)` pairs.
/// Requires at least three points and strictly positive values.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(
            "slope fit needs at least three points".into(),
        ));
    }
    if points.iter().any(|&(n, v)| !(n > 0.0) || !(v > 0.0)) {
        return Err(Error::InvalidParameter(
            "slope fit needs positive sizes and values".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n.ln(), v.ln())).collect();
    let m = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "slope fit needs at least two distinct sizes".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = logs
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let stderr = if logs.len() > 2 {
        (ss_res / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
    })
}

/// Median of a sample (averages the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in median"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let n = values.len() as f64;
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Standard error of the mean.
pub fn stderr_mean(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}
