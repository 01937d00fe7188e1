//! Energy growth against the integrated size of the metric derivative.

use super::{gamma_sobolev, time_derivative_sups, MetricSeries};
use crate::error::{Error, Result};
use crate::grid::{trapezoid, TimeSeries, WaveState};
use serde::{Deserialize, Serialize};

/// Relative energy growth treated as round-off when the metric is inert.
const GROWTH_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyFit {
    /// Smallest `C` with `E(t) <= E(0) exp(C K(t))` at every sample.
    pub constant: f64,
    /// Set when no finite `C` works (growth while `K = 0`).
    pub flagged: bool,
    /// `E(t) = ||du(t)||_{H^{s-1}}`
    pub energy: Vec<f64>,
    /// `K(t) = int_0^t ||dg||_inf`
    pub metric_integral: Vec<f64>,
}

/// `max(||d_t g||_inf, ||grad g||_inf)` per snapshot.
pub fn metric_derivative_sups(g_series: &MetricSeries) -> Vec<f64> {
    let rates = time_derivative_sups(g_series);
    g_series
        .states()
        .iter()
        .zip(rates)
        .map(|(comps, rt)| {
            comps.iter().flat_map(|c| c.gradient()).map(|d| d.max_abs()).fold(rt, f64::max)
        })
        .collect()
}

/// Fits the constant of `||du(t)||_{H^{s-1}} <= ||du(0)||_{H^{s-1}} exp(C int_0^t ||dg||_inf)`.
pub fn energy_monitor(u_series: &TimeSeries<WaveState>, g_series: &MetricSeries, s: f64) -> Result<EnergyFit> {
    if u_series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if u_series.len() != g_series.len()
        || u_series.times().iter().zip(g_series.times()).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(Error::InvalidArgument("solution and metric series are not aligned in time".into()));
    }
    let energy: Vec<f64> = u_series.states().iter().map(|st| gamma_sobolev(st, s - 1.0)).collect();
    let dg = metric_derivative_sups(g_series);
    let times = u_series.times();
    let mut integral = vec![0.0; times.len()];
    for k in 1..times.len() {
        integral[k] = integral[k - 1] + trapezoid(&times[k - 1..=k], &dg[k - 1..=k]);
    }
    let e0 = energy[0];
    let mut constant: f64 = 0.0;
    let mut flagged = false;
    for k in 1..times.len() {
        if e0 == 0.0 {
            if energy[k] > 0.0 {
                flagged = true;
            }
            continue;
        }
        let growth = (energy[k] / e0).ln();
        if growth <= GROWTH_TOLERANCE {
            continue;
        }
        if integral[k] > 0.0 {
            constant = constant.max(growth / integral[k]);
        } else {
            flagged = true;
        }
    }
    if flagged {
        constant = f64::INFINITY;
    }
    Ok(EnergyFit { constant, flagged, energy, metric_integral: integral })
}
