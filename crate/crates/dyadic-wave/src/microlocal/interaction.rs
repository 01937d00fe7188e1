//! Products of two localized pieces and their decay in the g-distance
//! between one center and the reflection of the other.

use super::{quantize, GMetric, PhasePoint, Profile, TestSymbol, DEFAULT_C0, DEFAULT_RADIUS};
use crate::dyadic::DyadicCutoff;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::lab::{loglog_fit, LogLogFit};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Points whose value falls below this fraction of the resonant value are
/// treated as round-off and left out of the fit.
pub const NOISE_FLOOR: f64 = 1e-12;

/// `||chi(h^{-1} D)(phi1^D u1 . phi2^D u2)||_{L^1} / (||u1||_2 ||u2||_2)`,
/// evaluated on a twice-finer grid so the product is alias free.
pub fn product_value(u1: &Field, u2: &Field, phi1: &TestSymbol, phi2: &TestSymbol, h: f64) -> Result<f64> {
    u1.check_same_grid(u2)?;
    let n1 = u1.spectral_l2_norm();
    let n2 = u2.spectral_l2_norm();
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(0.0);
    }
    let w1 = quantize(phi1, u1)?;
    let w2 = quantize(phi2, u2)?;
    low_product_l1(&w1, &w2, h).map(|v| v / (n1 * n2))
}

fn low_product_l1(w1: &Field, w2: &Field, h: f64) -> Result<f64> {
    let n = w1.grid().points_per_axis();
    let fine = w1.zero_padded(2 * n)?.mul(&w2.zero_padded(2 * n)?);
    let cut = DyadicCutoff::default();
    let low = fine.apply_radial(|r| cut.chi0(r / h));
    Ok(low.samples().iter().map(|z| z.norm()).sum::<f64>() * low.grid().cell_volume())
}

/// One-dimensional ladder: packet at `Y1 = (y1, eta1)`, second packet at
/// `Y2 = (y1 + s K, -eta1)` so that `g(Y1 reflected - Y2)^{1/2} = s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    pub points: usize,
    /// Box period in units of `K`.
    pub period_in_k: f64,
    pub k: f64,
    pub h: f64,
    /// `eta1` in units of `h`.
    pub carrier_in_h: f64,
    /// Frequency profile of both symbols.
    pub profile: Profile,
    pub base_separation: f64,
    pub ladder: Vec<f64>,
    pub n_probe: u32,
    pub c0: f64,
    pub r: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            points: 1024,
            period_in_k: 64.0,
            k: 2.0,
            h: 4.0,
            carrier_in_h: 4.0,
            // C^4: enough smoothness for N = 2
            profile: Profile::Spline(6),
            base_separation: 2.0,
            ladder: vec![1.0, 2.0, 4.0, 8.0],
            n_probe: 2,
            c0: DEFAULT_C0,
            r: DEFAULT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderPoint {
    /// `g(Y1 reflected - Y2)^{1/2}`.
    pub separation: f64,
    /// `1 + lambda^2 g`.
    pub weight: f64,
    pub value: f64,
    /// False when the separation is below `C0 r` (no decay is claimed there).
    pub in_regime: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionReport {
    pub metric: GMetric,
    pub profile: Profile,
    pub resonant: f64,
    /// The same norm with both symbols removed.
    pub unlocalized: f64,
    pub resonant_ratio: f64,
    pub ladder: Vec<LadderPoint>,
    /// Minus the slope of `log value` against `log(1 + lambda^2 g)`.
    pub exponent: f64,
    pub fit_points: usize,
    /// The fit behind `exponent`; `None` when the tail fell into round-off.
    pub fit: Option<LogLogFit>,
    pub n_probe: u32,
}

impl InteractionReport {
    pub fn supports_probe(&self) -> bool {
        self.exponent >= self.n_probe as f64
    }
}

fn packet(grid: Grid, at: &PhasePoint, width: f64) -> Field {
    let period = grid.period();
    Field::from_fn(grid, |x| {
        let mut d = x[0] - at.x[0];
        d -= period * (d / period).round();
        Complex64::from_polar((-0.5 * d * d / (width * width)).exp(), at.xi[0] * x[0])
    })
}

pub fn interaction_ladder(cfg: &InteractionConfig) -> Result<InteractionReport> {
    let metric = GMetric::new(cfg.k, cfg.h)?;
    if cfg.ladder.is_empty() {
        return Err(Error::Config("empty separation ladder".into()));
    }
    let period = cfg.period_in_k * cfg.k;
    let grid = Grid::new(1, cfg.points, period / (2.0 * std::f64::consts::PI))?;
    let eta = cfg.carrier_in_h * cfg.h;
    if eta + 2.0 * cfg.h > grid.nyquist() {
        return Err(Error::Config(format!("carrier {eta} plus two h-widths exceeds the grid band {}", grid.nyquist())));
    }
    let y1 = PhasePoint { x: [0.25 * period, 0.0, 0.0], xi: [eta, 0.0, 0.0] };
    let shape = (cfg.r * std::f64::consts::FRAC_1_SQRT_2, cfg.r * std::f64::consts::FRAC_1_SQRT_2);
    let symbol = |y: &PhasePoint| TestSymbol::tensor(1, metric, *y, cfg.r, shape, (Profile::Bump, cfg.profile));
    let width = cfg.k / metric.lambda().sqrt();
    let u1 = packet(grid, &y1, width);
    let phi1 = symbol(&y1);
    let resonant_at = y1.reflected();
    let value_at = |y2: &PhasePoint| -> Result<f64> {
        let u2 = packet(grid, y2, width);
        product_value(&u1, &u2, &phi1, &symbol(y2), cfg.h)
    };
    let resonant = value_at(&resonant_at)?;
    let u2 = packet(grid, &resonant_at, width);
    let unlocalized = low_product_l1(&u1, &u2, cfg.h)? / (u1.spectral_l2_norm() * u2.spectral_l2_norm());
    let lam2 = metric.lambda().powi(2);
    let ladder = cfg
        .ladder
        .par_iter()
        .map(|m| {
            let s = cfg.base_separation * m;
            let mut y2 = resonant_at;
            y2.x[0] += s * cfg.k;
            let g = metric.distance_sq(&resonant_at, &y2, 1, Some(period));
            Ok(LadderPoint { separation: g.sqrt(), weight: 1.0 + lam2 * g, value: value_at(&y2)?, in_regime: g.sqrt() >= cfg.c0 * cfg.r })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit: Vec<(f64, f64)> = ladder
        .iter()
        .filter(|p| p.in_regime && p.value > NOISE_FLOOR * resonant)
        .map(|p| (p.weight, p.value))
        .collect();
    let (exponent, fit_points, fit) = if fit.len() >= 3 {
        let f = loglog_fit(&fit, None)?;
        (-f.slope, fit.len(), Some(f))
    } else if ladder.iter().filter(|p| p.in_regime).count() >= 3 {
        // everything beyond the first rungs vanished into round-off
        (f64::INFINITY, fit.len(), None)
    } else {
        return Err(Error::Degenerate("fewer than three ladder points in the decay regime".into()));
    };
    Ok(InteractionReport {
        metric,
        profile: cfg.profile,
        resonant,
        unlocalized,
        resonant_ratio: resonant / unlocalized,
        ladder,
        exponent,
        fit_points,
        fit,
        n_probe: cfg.n_probe,
    })
}
