use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

/// Least-squares line `ln|q| ≈ slope·ln|t| + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `ln|q|`.
    pub residual: f64,
    pub samples: usize,
}

/// Power-law exponent of `quantity` against `|t|`. Samples must number at
/// least ten, have negative times and a quantity of fixed nonzero sign.
pub fn exponent_fit(times: &[f64], quantity: &[f64]) -> Result<FitResult> {
    if times.len() != quantity.len() {
        return Err(LabError::Fit("times and quantity differ in length".into()));
    }
    let n = times.len();
    if n < 10 {
        return Err(LabError::Fit(format!("need at least 10 samples, got {n}")));
    }
    if times.iter().any(|&t| !(t < 0.0)) {
        return Err(LabError::Fit("sample times must be negative".into()));
    }
    let sign = quantity[0].signum();
    if quantity.iter().any(|&q| q == 0.0 || !q.is_finite() || q.signum() != sign) {
        return Err(LabError::Fit("quantity vanishes or changes sign".into()));
    }
    let xs: Vec<f64> = times.iter().map(|t| (-t).ln()).collect();
    let ys: Vec<f64> = quantity.iter().map(|q| q.abs().ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LabError::Fit("sample times are not distinct".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(FitResult { slope, intercept, residual: (ss / nf).sqrt(), samples: n })
}
