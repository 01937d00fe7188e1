//! Constant-coefficient wave propagation and the estimate experiments built on
//! it: dispersive decay, frequency-localized Strichartz norms, dyadic frequency
//! scaling, ring partitions, and bilinear interaction.

mod experiments;
mod partition;

pub use experiments::*;
pub use partition::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, WaveState};
use crate::lab::fit::{loglog_fit, LogLogFit};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Spectral free evolution of `(u, d_t u)` by `t`:
/// `u <- cos(t|D|) u + sin(t|D|)/|D| v`, `v <- -|D| sin(t|D|) u + cos(t|D|) v`.
pub fn evolve_free(state: &WaveState, t: f64) -> WaveState {
    let grid = *state.grid();
    let su = state.position.spectrum();
    let sv = state.velocity.spectrum();
    let mut nu = Vec::with_capacity(su.len());
    let mut nv = Vec::with_capacity(su.len());
    for i in 0..su.len() {
        let xi = grid.frequency(i);
        let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        if r == 0.0 {
            nu.push(su[i] + sv[i] * t);
            nv.push(sv[i]);
        } else {
            let (s, c) = (t * r).sin_cos();
            nu.push(su[i] * c + sv[i] * (s / r));
            nv.push(su[i] * (-r * s) + sv[i] * c);
        }
    }
    WaveState {
        position: Field::from_spectrum(grid, nu).expect("same grid"),
        velocity: Field::from_spectrum(grid, nv).expect("same grid"),
        time: state.time + t,
    }
}

/// Annulus `inner <= |xi| <= outer`, optionally with a sub-ball `B(center, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub inner: f64,
    pub outer: f64,
    #[serde(default)]
    pub ball: Option<SubBall>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubBall {
    pub h: f64,
    pub center: [f64; 3],
}

impl RingSpec {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::InvalidArgument(format!("ring [{inner}, {outer}] needs 0 < inner < outer")));
        }
        Ok(Self { inner, outer, ball: None })
    }

    pub fn with_ball(mut self, h: f64, center: [f64; 3]) -> Result<Self> {
        let c = norm(&center);
        if !(h > 0.0 && h <= 1.0) || c - h < self.inner - 1e-12 || c + h > self.outer + 1e-12 {
            return Err(Error::InvalidArgument(format!("ball B({center:?}, {h}) does not lie in the ring")));
        }
        self.ball = Some(SubBall { h, center });
        Ok(self)
    }

    pub fn contains(&self, xi: &[f64; 3]) -> bool {
        let r = norm(xi);
        r >= self.inner && r <= self.outer
    }

    pub fn width(&self) -> f64 {
        self.outer - self.inner
    }

    /// Distance from a point to the annulus (0 inside).
    pub fn distance(&self, xi: &[f64; 3]) -> f64 {
        let r = norm(xi);
        (self.inner - r).max(r - self.outer).max(0.0)
    }
}

pub(crate) fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// A log-log fit together with the data it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    /// Set when `r2 < 0.95`: the fit is reported but not trusted.
    pub flagged: bool,
}

pub const MIN_R2: f64 = 0.95;

impl DecayFit {
    pub fn fit(abscissa: Vec<f64>, ordinate: Vec<f64>, window: Option<(f64, f64)>) -> Result<Self> {
        let pts: Vec<(f64, f64)> = abscissa.iter().copied().zip(ordinate.iter().copied()).collect();
        let LogLogFit { slope, intercept, r2, window, .. } = loglog_fit(&pts, window)?;
        Ok(Self { abscissa, ordinate, slope, intercept, r2, window, flagged: r2 < MIN_R2 })
    }
}

/// Wrapped distance from `x` to `center` on the periodic box.
pub fn periodic_distance(grid: &Grid, x: &[f64; 3], center: &[f64; 3]) -> f64 {
    let p = grid.period();
    let mut s = 0.0;
    for a in 0..grid.dim() {
        let mut d = (x[a] - center[a]).rem_euclid(p);
        if d > 0.5 * p {
            d = p - d;
        }
        s += d * d;
    }
    s.sqrt()
}

/// Largest wrapped distance from `center` at which `|u| > threshold * max|u|`.
pub fn support_radius(field: &Field, center: &[f64; 3], threshold: f64) -> f64 {
    let grid = field.grid();
    let peak = field.max_abs();
    field
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > threshold * peak)
        .map(|(i, _)| periodic_distance(grid, &grid.point(i), center))
        .fold(0.0, f64::max)
}

/// Last time before a wave leaving a support of radius `rho` at unit speed
/// meets its own periodic image: `pi L - 2 rho`.
pub fn fidelity_window(grid: &Grid, rho: f64) -> f64 {
    PI * grid.box_scale() - 2.0 * rho
}

/// Spectrum of a wave kept on one branch: `e^{-i t omega}` per coefficient.
pub(crate) fn phase_rotate(spec: &[Complex64], omega: &[f64], t: f64) -> Vec<Complex64> {
    spec.iter().zip(omega).map(|(c, w)| c * Complex64::from_polar(1.0, -t * w)).collect()
}

#[cfg(test)]
mod tests;
