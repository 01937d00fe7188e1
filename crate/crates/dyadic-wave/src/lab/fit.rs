//! Least-squares fits on logarithmic axes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    /// Inclusive abscissa window actually used.
    pub window: (f64, f64),
}

/// Fits `log y = slope * log x + intercept` over points with `x` inside the
/// (inclusive) window. Needs at least 3 points, positive values, and at least
/// two distinct abscissae.
pub fn loglog_fit(points: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<LogLogFit> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let used: Vec<(f64, f64)> = points.iter().copied().filter(|(x, _)| *x >= lo && *x <= hi).collect();
    if used.len() < 3 {
        return Err(Error::Degenerate(format!("{} points in window, need 3", used.len())));
    }
    if used.iter().any(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return Err(Error::Degenerate("non-positive value on a logarithmic axis".into()));
    }
    let lx: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&lx, &ly)?;
    let wlo = used.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let whi = used.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(LogLogFit { slope, intercept, r2, points: used.len(), window: (wlo, whi) })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, R^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 1e-300) || x.iter().all(|v| *v == x[0]) {
        return Err(Error::Degenerate("constant abscissa".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if ss_tot <= 1e-300 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r2))
}
