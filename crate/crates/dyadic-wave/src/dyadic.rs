//! Littlewood-Paley blocks, low-pass truncations, and Sobolev / Besov meters.
//!
//! Index convention: `Delta_{-1} = chi0(D)`, `Delta_q = psi(2^{-q} D)` for
//! `q >= 0`, and `S_q = chi0(2^{-q} D) = sum_{j <= q-1} Delta_j`.

use crate::error::{Error, Result};
use crate::grid::{lebesgue_norm, trapezoid, Field, Grid, TimeSeries, WaveState};

/// Inner radius of the ball plateau.
pub const BALL_PLATEAU: f64 = 0.75;
/// Outer radius of the ball bump support.
pub const BALL_SUPPORT: f64 = 4.0 / 3.0;
/// Annulus bounds of the mother block.
pub const ANNULUS_INNER: f64 = 0.75;
pub const ANNULUS_OUTER: f64 = 8.0 / 3.0;

/// `1` for `s <= 0`, `0` for `s >= 1`, and a C^4 polynomial transition.
pub fn smooth_tail(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let p = s.powi(5) * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + 70.0 * s))));
        1.0 - p
    }
}

/// Radial profiles `chi0` and `psi` with exact compact supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicCutoff {
    pub plateau: f64,
    pub support: f64,
}

impl Default for DyadicCutoff {
    fn default() -> Self {
        Self { plateau: BALL_PLATEAU, support: BALL_SUPPORT }
    }
}

impl DyadicCutoff {
    /// Ball bump: 1 on `|xi| <= 3/4`, 0 on `|xi| >= 4/3`.
    pub fn chi0(&self, r: f64) -> f64 {
        smooth_tail((r - self.plateau) / (self.support - self.plateau))
    }

    /// Annulus bump `chi0(xi/2) - chi0(xi)`, supported in `[3/4, 8/3]`.
    pub fn psi(&self, r: f64) -> f64 {
        self.chi0(0.5 * r) - self.chi0(r)
    }

    /// Multiplier of `Delta_q` at `|xi| = r` (with `q = -1` the ball).
    pub fn block_multiplier(&self, q: i32, r: f64) -> f64 {
        if q < 0 {
            self.chi0(r)
        } else {
            self.psi(r / 2f64.powi(q))
        }
    }

    /// Multiplier of `Delta_q` without the special low block: `psi(2^{-q} r)` for every integer `q`.
    pub fn homogeneous_block_multiplier(&self, q: i32, r: f64) -> f64 {
        self.psi(r / 2f64.powi(q))
    }

    /// Multiplier of `S_n` at `|xi| = r`.
    pub fn lowpass_multiplier(&self, n: i32, r: f64) -> f64 {
        self.chi0(r / 2f64.powi(n))
    }

    /// Outer support radius of block `q`.
    pub fn block_outer(&self, q: i32) -> f64 {
        if q < 0 {
            self.support
        } else {
            2.0 * self.support * 2f64.powi(q)
        }
    }

    /// Inner support radius of block `q` (0 for the ball).
    pub fn block_inner(&self, q: i32) -> f64 {
        if q < 0 {
            0.0
        } else {
            self.plateau * 2f64.powi(q)
        }
    }
}

/// A block index together with its resolution status on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicScale {
    pub q: i32,
    pub resolved: bool,
}

impl DyadicScale {
    pub fn on(grid: &Grid, q: i32) -> Self {
        let needed = DyadicCutoff::default().block_outer(q);
        Self { q, resolved: needed <= grid.nyquist() }
    }

    fn require(grid: &Grid, q: i32) -> Result<()> {
        let s = Self::on(grid, q);
        if s.resolved {
            Ok(())
        } else {
            Err(Error::Unresolved { q, needed: DyadicCutoff::default().block_outer(q), nyquist: grid.nyquist() })
        }
    }
}

/// Largest block index resolved on the grid.
pub fn finest_resolved(grid: &Grid) -> i32 {
    let mut q = -1;
    while DyadicScale::on(grid, q + 1).resolved {
        q += 1;
    }
    q
}

/// `Delta_q u` (`q = -1` is `chi0(D)`).
pub fn block(field: &Field, q: i32) -> Result<Field> {
    DyadicScale::require(field.grid(), q)?;
    Ok(block_unchecked(field, q))
}

pub(crate) fn block_unchecked(field: &Field, q: i32) -> Field {
    let cut = DyadicCutoff::default();
    field.apply_radial(|r| cut.block_multiplier(q, r))
}

/// `S_n u = chi0(2^{-n} D) u`.
pub fn lowpass(field: &Field, n: i32) -> Field {
    let cut = DyadicCutoff::default();
    field.apply_radial(|r| cut.lowpass_multiplier(n, r))
}

/// Radius of the `S_{delta q}` cutoff: `c_cut T^{-(1-delta)} 2^{delta q - 1}`.
pub fn delta_cutoff_radius(q: i32, delta: f64, t_horizon: f64, c_cut: f64) -> f64 {
    c_cut * t_horizon.powf(-(1.0 - delta)) * 2f64.powf(delta * q as f64 - 1.0)
}

/// `S_{delta q} u = chi0(D / rho)`.
pub fn lowpass_delta(field: &Field, q: i32, delta: f64, t_horizon: f64, c_cut: f64) -> Result<Field> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} not in (0, 1)")));
    }
    if !(t_horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon T = {t_horizon} must be positive")));
    }
    let rho = delta_cutoff_radius(q, delta, t_horizon, c_cut);
    let cut = DyadicCutoff::default();
    Ok(field.apply_radial(|r| cut.chi0(r / rho)))
}

/// `H^s` norm with weight `(1+|xi|^2)^s`, or `|xi|^{2s}` when homogeneous.
pub fn sobolev_norm(field: &Field, s: f64, homogeneous: bool) -> Result<f64> {
    let spec = field.spectrum();
    let grid = field.grid();
    if homogeneous {
        let peak = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if spec[0].norm() > 1e-12 * peak.max(f64::MIN_POSITIVE) {
            return Err(Error::NonzeroMean(spec[0].norm()));
        }
    }
    let sum: f64 = spec
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let r2 = {
                let xi = grid.frequency(i);
                xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]
            };
            let w = if homogeneous {
                if i == 0 {
                    0.0
                } else {
                    r2.powf(s)
                }
            } else {
                (1.0 + r2).powf(s)
            };
            w * c.norm_sqr()
        })
        .sum();
    Ok((grid.box_measure() * sum).sqrt())
}

/// Range of homogeneous block indices that can see the nonzero lattice frequencies.
pub fn homogeneous_block_range(grid: &Grid) -> (i32, i32) {
    let cut = DyadicCutoff::default();
    let lowest = 1.0 / grid.box_scale();
    let highest = grid.nyquist() * (grid.dim() as f64).sqrt();
    let q_lo = (lowest / (2.0 * cut.support)).log2().floor() as i32;
    let q_hi = (highest / cut.plateau).log2().ceil() as i32;
    (q_lo, q_hi)
}

/// Homogeneous Besov norm `|| (2^{qs} ||Delta_q u||_{L^p})_q ||_{l^r}` over all
/// blocks meeting the lattice frequencies; the zero mode is not seen.
pub fn besov_norm(field: &Field, s: f64, p: f64, r: f64) -> Result<f64> {
    let cut = DyadicCutoff::default();
    let (q_lo, q_hi) = homogeneous_block_range(field.grid());
    let mut terms = Vec::new();
    for q in q_lo..=q_hi {
        let b = field.apply_radial(|rad| cut.homogeneous_block_multiplier(q, rad));
        terms.push(2f64.powf(q as f64 * s) * lebesgue_norm(&b, p)?);
    }
    Ok(lr_sum(&terms, r))
}

/// `l^r` norm of a finite sequence (`r = inf` is the max).
pub fn lr_sum(terms: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        terms.iter().fold(0.0, |m, t| m.max(t.abs()))
    } else {
        terms.iter().map(|t| t.abs().powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// `max(sup|d_t g|, sup|d_j g|)` for one snapshot.
pub fn derivative_sup(state: &WaveState) -> f64 {
    let mut m = state.velocity.max_abs();
    for d in state.position.gradient() {
        m = m.max(d.max_abs());
    }
    m
}

/// `int_0^T ||dg(tau)||_{L^inf} d tau` by the trapezoid rule over stored
/// snapshots `(g, d_t g)` with `t <= T`.
pub fn key_quantity(g_series: &TimeSeries<WaveState>, t_horizon: f64) -> Result<f64> {
    if g_series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let part = g_series.truncated(t_horizon + 1e-12 * t_horizon.abs().max(1.0));
    let vals: Vec<f64> = part.states().iter().map(derivative_sup).collect();
    Ok(trapezoid(part.times(), &vals))
}

/// Whether block `q` vanishes identically at `|xi| = r`.
pub fn outside_block(q: i32, r: f64) -> bool {
    let cut = DyadicCutoff::default();
    r >= cut.block_outer(q) || r <= cut.block_inner(q)
}
