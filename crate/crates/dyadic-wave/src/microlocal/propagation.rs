//! A Gaussian packet run through a static variable-coefficient wave
//! equation; its concentration is compared at the flowed-out and the
//! starting phase-space points.

use super::{microloc_seminorm, regularity_order, GMetric, PhasePoint, SeminormReport, SymbolFamily, DEFAULT_C0, DEFAULT_RADIUS};
use crate::eikonal::{hamiltonian_flow, StandardMetric};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, WaveState};
use crate::quasilinear::{MetricFields, Stepper};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub dim: usize,
    pub points: usize,
    pub box_scale: f64,
    pub metric: StandardMetric,
    pub amplitude: f64,
    pub q: i32,
    /// `|I_q|`.
    pub interval: f64,
    /// `C` in `K = C 2^q |I_q| h`.
    pub c_k: f64,
    /// `lambda = K h`, which fixes `h` once `K / h` is set by the scale law.
    pub lambda: f64,
    /// Fixed `(K, h)` instead of the scale law, for limits in `|I_q|`.
    pub metric_override: Option<GMetric>,
    pub x0: [f64; 3],
    /// Direction of the carrier; its length is set to `2^q`.
    pub direction: [f64; 3],
    pub n: u32,
    pub c0: f64,
    pub r: f64,
    pub cfl: f64,
    pub ray_steps: usize,
    /// `|det dx/dx_0|` below this counts as a caustic.
    pub caustic_threshold: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            points: 256,
            box_scale: 1.0,
            metric: StandardMetric::Conformal,
            amplitude: 0.12,
            q: 5,
            interval: 1.0,
            c_k: 1.0,
            lambda: 4.0,
            metric_override: None,
            x0: [std::f64::consts::PI, std::f64::consts::PI, 0.0],
            direction: [1.0, 0.4, 0.0],
            n: 2,
            c0: DEFAULT_C0,
            r: DEFAULT_RADIUS,
            cfl: 0.25,
            ray_steps: 400,
            caustic_threshold: 0.05,
        }
    }
}

impl PropagationConfig {
    /// `K = C 2^q |I| h` with `K h = lambda`.
    pub fn g_metric(&self) -> Result<GMetric> {
        if let Some(m) = self.metric_override {
            return GMetric::new(m.k, m.h);
        }
        let s = self.c_k * 2f64.powi(self.q) * self.interval;
        if !(s > 0.0) {
            return Err(Error::Config("the scale law needs C_K, |I| > 0".into()));
        }
        let h = (self.lambda / s).sqrt();
        GMetric::new(s * h, h)
    }

    pub fn start(&self) -> PhasePoint {
        let norm = self.direction[..self.dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut xi = [0.0; 3];
        for (i, v) in xi.iter_mut().enumerate().take(self.dim) {
            *v = self.direction[i] / norm * 2f64.powi(self.q);
        }
        PhasePoint { x: self.x0, xi }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagationReport {
    pub metric: StandardMetric,
    pub g: GMetric,
    pub start: PhasePoint,
    pub flowed: PhasePoint,
    /// `g(flowed - start)^{1/2}`.
    pub travel: f64,
    pub at_flowed: SeminormReport,
    pub at_start: SeminormReport,
    /// `at_flowed / at_start`.
    pub ratio: f64,
    pub steps: usize,
}

/// `exp(-|x - x0|^2 / 2 w^2 + i x.xi0)` with periodic distances.
pub fn gaussian_packet(grid: Grid, at: &PhasePoint, width: f64) -> Field {
    let d = grid.dim();
    let p = grid.period();
    Field::from_fn(grid, |x| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for i in 0..d {
            let mut dx = x[i] - at.x[i];
            dx -= p * (dx / p).round();
            r2 += dx * dx;
            phase += at.xi[i] * x[i];
        }
        Complex64::from_polar((-0.5 * r2 / (width * width)).exp(), phase)
    })
}

pub fn propagate_wavepacket(cfg: &PropagationConfig) -> Result<PropagationReport> {
    let grid = Grid::new(cfg.dim, cfg.points, cfg.box_scale)?;
    let g = cfg.g_metric()?;
    let snapshot = cfg.metric.build(grid, cfg.amplitude)?;
    let start = cfg.start();
    if start.xi.iter().map(|v| v.abs()).fold(0.0, f64::max) + 3.0 * g.h > grid.nyquist() {
        return Err(Error::Config("packet frequencies exceed the grid band".into()));
    }
    let ray = hamiltonian_flow(&snapshot, &start, cfg.interval, cfg.ray_steps)?;
    if let Some((time, det)) = ray.caustic_time(cfg.caustic_threshold) {
        return Err(Error::Caustic { time, det });
    }
    let mut flowed = ray.end();
    for v in flowed.x.iter_mut().take(cfg.dim) {
        *v = v.rem_euclid(grid.period());
    }

    // forward branch: u_t = -i omega(D) u with omega frozen at the start point
    let a = snapshot.jet(&start.x).a;
    // widths K / sqrt(lambda) and h / sqrt(lambda): equal in g-units
    let u0 = gaussian_packet(grid, &start, g.k / g.lambda().sqrt());
    let u1 = u0.apply_multiplier(|xi| {
        let mut s = 0.0;
        for i in 0..cfg.dim {
            for j in 0..cfg.dim {
                s += xi[i] * a[i][j] * xi[j];
            }
        }
        Complex64::new(0.0, -s.max(0.0).sqrt())
    });

    let speed = snapshot.max_speed_squared().sqrt();
    let limit = cfg.cfl * grid.spacing() / speed;
    let steps = (cfg.interval / limit).ceil().max(1.0) as usize;
    let dt = cfg.interval / steps as f64;
    let stepper = Stepper::new(grid, dt, steps, cfg.cfl);
    let fields: MetricFields = snapshot.components().iter().map(|c| c.samples().iter().map(|z| z.re).collect()).collect();
    let flat = snapshot.is_flat();
    let mut provider = |_t: f64, _u: &[Complex64]| -> Result<Option<MetricFields>> { Ok(if flat { None } else { Some(fields.clone()) }) };
    let mut end = |part: fn(Complex64) -> f64| -> Result<Field> {
        let data = WaveState::new(u0.map(|z| part(z).into()), u1.map(|z| part(z).into()), 0.0)?;
        let run = stepper.solve(&data, &mut provider, false)?;
        Ok(run.states.states().last().expect("initial state is recorded").position.clone())
    };
    let re = end(|z| z.re)?;
    let im = end(|z| z.im)?;
    let u = re.add(&im.scale(Complex64::new(0.0, 1.0)));

    let order = regularity_order(cfg.n, cfg.dim);
    let seminorm = |at: &PhasePoint| -> Result<SeminormReport> {
        let family = SymbolFamily::standard(&grid, g, at, cfg.r, order)?;
        microloc_seminorm(&u, at, g, cfg.c0, cfg.r, cfg.n, &family)
    };
    let at_flowed = seminorm(&flowed)?;
    let at_start = seminorm(&start)?;
    let ratio = if at_start.value > 0.0 { at_flowed.value / at_start.value } else { f64::INFINITY };
    Ok(PropagationReport {
        metric: cfg.metric,
        g,
        start,
        travel: g.distance_sq(&flowed, &start, cfg.dim, Some(grid.period())).sqrt(),
        flowed,
        at_flowed,
        at_start,
        ratio,
        steps,
    })
}
