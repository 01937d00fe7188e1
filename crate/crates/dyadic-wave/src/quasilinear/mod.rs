//! Frequency-truncated Picard scheme for `u_tt - Δu - g(u)^{ij} d_i d_j u = 0`
//! at desk scale: time-mollified metrics, the iteration with its trace of
//! norms, an energy monitor, the paradifferential remainder of each dyadic
//! block, interval partitions under three budgets, and Strichartz gluing.

mod checkpoint;
mod energy;
mod residual;
mod solver;

pub use checkpoint::*;
pub use energy::*;
pub use residual::*;
pub use solver::direct_solve;

use crate::dyadic::{derivative_sup, lowpass, smooth_tail};
use crate::eikonal::{min_eigenvalue, sym_index};
use crate::error::{Error, Result};
use crate::grid::{time_norm, Field, Grid, TimeSeries, WaveState};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
pub(crate) use solver::{MetricFields, Stepper};
use std::path::PathBuf;

/// Packed upper-triangular metric components per snapshot.
pub type MetricSeries = TimeSeries<Vec<Field>>;

/// Even time cutoff: 1 on `[-1/2, 1/2]`, 0 outside `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mollifier {
    #[default]
    Smoothstep,
}

impl Mollifier {
    pub fn value(self, tau: f64) -> f64 {
        match self {
            Mollifier::Smoothstep => smooth_tail(2.0 * tau.abs() - 1.0),
        }
    }

    pub fn derivative(self, tau: f64) -> f64 {
        match self {
            Mollifier::Smoothstep => {
                let s = 2.0 * tau.abs() - 1.0;
                if s <= 0.0 || s >= 1.0 {
                    0.0
                } else {
                    -2.0 * tau.signum() * 630.0 * s.powi(4) * (1.0 - s).powi(4)
                }
            }
        }
    }
}

/// `t -> theta(t/T) g(t)`, snapshot by snapshot.
pub fn mollify_metric(g_series: &MetricSeries, horizon: f64, theta: Mollifier) -> MetricSeries {
    g_series.map(|t, comps| {
        let w = theta.value(t / horizon);
        comps.iter().map(|c| c.scale_real(w)).collect()
    })
}

/// `int ||d_t g||_inf dt` with centered differences in time (one-sided at the ends).
pub fn time_variation(g_series: &MetricSeries) -> f64 {
    let rates = time_derivative_sups(g_series);
    crate::grid::trapezoid(g_series.times(), &rates)
}

fn time_derivative_sups(g_series: &MetricSeries) -> Vec<f64> {
    let t = g_series.times();
    let g = g_series.states();
    let n = t.len();
    (0..n)
        .map(|k| {
            if n < 2 {
                return 0.0;
            }
            let (a, b) = if k == 0 { (0, 1) } else if k == n - 1 { (n - 2, n - 1) } else { (k - 1, k + 1) };
            let dt = t[b] - t[a];
            g[a].iter()
                .zip(&g[b])
                .map(|(x, y)| y.sub(x).max_abs() / dt)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `u -> g(u)`, a smooth symmetric matrix with `g(0) = 0`.
pub trait MetricLaw: Sync {
    fn matrix(&self, u: f64) -> [[f64; 3]; 3];
}

/// `g(u) = (linear u + quadratic u^2) B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialLaw {
    pub linear: f64,
    pub quadratic: f64,
    pub shape: [[f64; 3]; 3],
}

impl PolynomialLaw {
    pub fn zero() -> Self {
        Self { linear: 0.0, quadratic: 0.0, shape: [[0.0; 3]; 3] }
    }

    /// The law used by the small-data runs: `B = [[1, 0.3, 0], [0.3, 0.5, 0], [0, 0, 0.7]]`.
    pub fn standard(linear: f64, quadratic: f64) -> Self {
        Self { linear, quadratic, shape: [[1.0, 0.3, 0.0], [0.3, 0.5, 0.0], [0.0, 0.0, 0.7]] }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self { linear: c * self.linear, quadratic: c * self.quadratic, shape: self.shape }
    }
}

impl MetricLaw for PolynomialLaw {
    fn matrix(&self, u: f64) -> [[f64; 3]; 3] {
        let w = self.linear * u + self.quadratic * u * u;
        let mut m = self.shape;
        m.iter_mut().flatten().for_each(|x| *x *= w);
        m
    }
}

/// Parameters of one run of the scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_scale: f64,
    /// Sobolev index of the data.
    pub s: f64,
    /// Index of the successive-difference meter, below `s`.
    pub s_prime: f64,
    pub horizon: f64,
    pub delta: f64,
    pub eps: f64,
    /// Hessian budget of one interval.
    pub eps_hat: f64,
    /// Remainder budget fraction; `None` means `(2^q T)^{-delta/2}`.
    pub lambda: Option<f64>,
    /// Constant in the `S_{delta q}` cutoff radius.
    pub c_cut: f64,
    pub mollifier: Mollifier,
    pub n_max: usize,
    pub cfl: f64,
    /// Wave speed bound used to pick the step; exceeding it is a CFL violation.
    pub max_speed: f64,
    pub max_dt: Option<f64>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            points_per_axis: 64,
            box_scale: 0.18,
            s: 2.0,
            s_prime: 1.75,
            horizon: 1.0,
            delta: 2.0 / 3.0,
            eps: 0.05,
            eps_hat: 0.1,
            lambda: None,
            c_cut: 1.0,
            mollifier: Mollifier::Smoothstep,
            n_max: 8,
            cfl: 0.25,
            max_speed: 1.5,
            max_dt: None,
            checkpoint_dir: None,
        }
    }
}

impl SchemeConfig {
    /// `s_d = d/2 + 1/2 + 1/6`.
    pub fn critical_index(&self) -> f64 {
        self.dim as f64 / 2.0 + 0.5 + 1.0 / 6.0
    }

    pub fn alpha(&self) -> f64 {
        self.s - self.critical_index()
    }

    pub fn lambda_for(&self, q: i32) -> f64 {
        self.lambda.unwrap_or_else(|| (2f64.powi(q) * self.horizon).powf(-self.delta / 2.0).min(1.0))
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.points_per_axis, self.box_scale)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("dim {} not in 1..=3", self.dim));
        }
        if !(self.s > self.critical_index()) {
            return bad(format!("s = {} must exceed s_d = {:.4}", self.s, self.critical_index()));
        }
        if !(self.s_prime < self.s) {
            return bad(format!("s' = {} must be below s = {}", self.s_prime, self.s));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} not in (0, 1)", self.delta));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l <= 1.0) {
                return bad(format!("lambda = {l} not in (0, 1]"));
            }
        }
        if !(self.horizon > 0.0 && self.eps > 0.0 && self.eps_hat > 0.0 && self.c_cut > 0.0) {
            return bad("horizon, eps, eps_hat and c_cut must be positive".into());
        }
        if !(self.cfl > 0.0 && self.max_speed >= 1.0) {
            return bad("cfl must be positive and max_speed at least 1".into());
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1".into());
        }
        Ok(())
    }

    /// Uniform step `dt = T / steps` below both the CFL limit and `max_dt`.
    pub fn time_grid(&self) -> Result<(f64, usize)> {
        let grid = self.grid()?;
        let mut limit = self.cfl * grid.spacing() / self.max_speed;
        if let Some(m) = self.max_dt {
            limit = limit.min(m);
        }
        let steps = (self.horizon / limit).ceil().max(1.0) as usize;
        Ok((self.horizon / steps as f64, steps))
    }
}

/// `||(grad u, d_t u)||_{H^sigma}`, inhomogeneous weight.
pub fn gamma_sobolev(state: &WaveState, sigma: f64) -> f64 {
    let grid = state.grid();
    let su = state.position.spectrum();
    let sv = state.velocity.spectrum();
    let sum: f64 = (0..grid.len())
        .map(|i| {
            let xi = grid.frequency(i);
            let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            (1.0 + r2).powf(sigma) * (r2 * su[i].norm_sqr() + sv[i].norm_sqr())
        })
        .sum();
    (grid.box_measure() * sum).sqrt()
}

fn state_difference(a: &WaveState, b: &WaveState) -> WaveState {
    WaveState { position: a.position.sub(&b.position), velocity: a.velocity.sub(&b.velocity), time: a.time }
}

/// `||gamma||_{H^{d/2-1/2+alpha}} + T^{1/6} ||gamma||_{H^{s-1}}`.
pub fn data_size(data: &WaveState, cfg: &SchemeConfig) -> f64 {
    let d = cfg.dim as f64;
    gamma_sobolev(data, d / 2.0 - 0.5 + cfg.alpha()) + cfg.horizon.powf(1.0 / 6.0) * gamma_sobolev(data, cfg.s - 1.0)
}

/// `S_n` applied to both data components.
pub fn truncate_data(data: &WaveState, n: i32) -> WaveState {
    WaveState { position: lowpass(&data.position, n), velocity: lowpass(&data.velocity, n), time: data.time }
}

/// Real Cauchy data with Gaussian spectral envelope of width `width` and
/// random phases, scaled so that `max |u_0| = amplitude`; `u_1` is built the
/// same way with sup `amplitude * width / 2`.
pub fn smooth_data(grid: Grid, width: f64, amplitude: f64, seed: u64) -> Result<WaveState> {
    if !(width > 0.0 && amplitude >= 0.0) {
        return Err(Error::InvalidArgument(format!("smooth_data needs width > 0, amplitude >= 0 (got {width}, {amplitude})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |sup: f64| -> Result<Field> {
        let spec: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let xi = grid.frequency(i);
                let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
                let c = Complex64::new(crate::grid::gaussian(&mut rng), crate::grid::gaussian(&mut rng));
                if i == 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * (-0.5 * r2 / (width * width)).exp()
                }
            })
            .collect();
        let f = Field::from_spectrum(grid, spec)?.real_part();
        let peak = f.max_abs();
        if peak == 0.0 {
            return Err(Error::InvalidArgument("box too coarse for this spectral width".into()));
        }
        Ok(f.scale_real(sup / peak))
    };
    let u0 = make(amplitude)?;
    let u1 = make(amplitude * width / 2.0)?;
    WaveState::new(u0, u1, 0.0)
}

/// Norms of one iterate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub n: usize,
    /// `||du^{(n)}||_{L^2_T L^inf}`
    pub strichartz: f64,
    /// `||du^{(n)}||_{L^inf_T H^{s-1}}`
    pub energy: f64,
    /// `||d(u^{(n+1)} - u^{(n)})||_{L^inf_T H^{s'-1}}`
    pub difference: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub entries: Vec<TraceEntry>,
}

impl IterationTrace {
    pub fn differences(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.difference).collect()
    }

    /// `d_{n+1} / d_n` for each consecutive pair (NaN when `d_n = 0`).
    pub fn ratios(&self) -> Vec<f64> {
        self.differences().windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::NAN }).collect()
    }
}

/// Output of [`iterate_scheme`].
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub config: SchemeConfig,
    pub data: WaveState,
    pub trace: IterationTrace,
    /// Final iterate `u^{(n_max)}` on the step grid.
    pub solution: TimeSeries<WaveState>,
    /// Mollified metric that the final iterate was solved against.
    pub metric: MetricSeries,
    pub dt: f64,
    pub steps: usize,
    pub data_size: f64,
    /// Final-iterate norms.
    pub strichartz: f64,
    pub energy: f64,
}

fn strichartz_meter(series: &TimeSeries<WaveState>) -> Result<f64> {
    let sups: Vec<f64> = series.states().iter().map(derivative_sup).collect();
    time_norm(series.times(), &sups, 2.0)
}

fn energy_meter(series: &TimeSeries<WaveState>, sigma: f64) -> f64 {
    series.states().iter().map(|s| gamma_sobolev(s, sigma)).fold(0.0, f64::max)
}

fn law_is_centered(law: &dyn MetricLaw) -> bool {
    law.matrix(0.0).iter().flatten().all(|x| *x == 0.0)
}

/// Metric `theta(t/T) g(u(t))` as pointwise packed components.
fn metric_from_position(u: &[f64], law: &dyn MetricLaw, dim: usize, weight: f64) -> MetricFields {
    let m = dim * (dim + 1) / 2;
    let mut comps = vec![vec![0.0; u.len()]; m];
    for (p, &x) in u.iter().enumerate() {
        let g = law.matrix(x);
        for i in 0..dim {
            for j in i..dim {
                comps[sym_index(dim, i, j)][p] = weight * g[i][j];
            }
        }
    }
    comps
}

/// Hermite interpolation of a stored iterate at `t` (uniform steps `dt`).
fn interpolate_position(series: &TimeSeries<WaveState>, dt: f64, t: f64) -> Vec<f64> {
    let states = series.states();
    let last = states.len() - 1;
    let k = ((t / dt + 1e-9).floor() as usize).min(last.saturating_sub(1));
    let s = ((t - k as f64 * dt) / dt).clamp(0.0, 1.0);
    let (a, b) = (&states[k], &states[(k + 1).min(last)]);
    if s < 1e-12 {
        return a.position.samples().iter().map(|z| z.re).collect();
    }
    if s > 1.0 - 1e-12 {
        return b.position.samples().iter().map(|z| z.re).collect();
    }
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let (ua, va, ub, vb) = (a.position.samples(), a.velocity.samples(), b.position.samples(), b.velocity.samples());
    (0..ua.len())
        .map(|p| h00 * ua[p].re + h10 * dt * va[p].re + h01 * ub[p].re + h11 * dt * vb[p].re)
        .collect()
}

/// Positivity of `I + g` and the speed bound behind the step.
pub(crate) fn check_metric(g: &MetricFields, dim: usize, dt: f64, dx: f64, cfl: f64) -> Result<()> {
    let mut min_eig = f64::INFINITY;
    let mut max_eig: f64 = 0.0;
    for p in 0..g[0].len() {
        let mut a = [[0.0; 3]; 3];
        let mut neg = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                a[i][j] = g[sym_index(dim, i, j)][p] + if i == j { 1.0 } else { 0.0 };
                neg[i][j] = -a[i][j];
            }
        }
        min_eig = min_eig.min(min_eigenvalue(&a, dim));
        max_eig = max_eig.max(-min_eigenvalue(&neg, dim));
    }
    if min_eig < crate::eikonal::POSITIVITY_MARGIN {
        return Err(Error::Positivity { min_eig, margin: crate::eikonal::POSITIVITY_MARGIN });
    }
    let limit = cfl * dx / max_eig.sqrt();
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(())
}

/// Runs `u^{(0)} = ` free wave of `S_0` data, then `n_max` linear solves of
/// `u_tt - Δu - theta(t/T) g(u^{(n)})·∇²u = 0` with `S_{n+1}` data.
pub fn iterate_scheme(data: &WaveState, law: &dyn MetricLaw, cfg: &SchemeConfig) -> Result<SchemeRun> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    if *data.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if !law_is_centered(law) {
        return Err(Error::InvalidArgument("metric law must vanish at u = 0".into()));
    }
    let (dt, steps) = cfg.time_grid()?;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let first = truncate_data(data, 0);
    let mut current = TimeSeries::new(times.clone(), times.iter().map(|&t| crate::waveprop::evolve_free(&first, t)).collect())?;
    let stepper = Stepper::new(grid, dt, steps, cfg.cfl);
    let mut trace = IterationTrace::default();
    let mut metric = None;
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        save_iterate(dir, 0, &current)?;
    }
    for n in 0..cfg.n_max {
        let next_data = truncate_data(data, n as i32 + 1);
        let record = n + 1 == cfg.n_max;
        let prev = &current;
        let mut provider = |t: f64, _: &[Complex64]| -> Result<Option<MetricFields>> {
            let w = cfg.mollifier.value(t / cfg.horizon);
            if w == 0.0 {
                return Ok(None);
            }
            let u = interpolate_position(prev, dt, t);
            Ok(Some(metric_from_position(&u, law, cfg.dim, w)))
        };
        let solved = stepper.solve(&next_data, &mut provider, record)?;
        let diff = current
            .states()
            .iter()
            .zip(solved.states.states())
            .map(|(a, b)| gamma_sobolev(&state_difference(b, a), cfg.s_prime - 1.0))
            .fold(0.0, f64::max);
        trace.entries.push(TraceEntry {
            n,
            strichartz: strichartz_meter(&current)?,
            energy: energy_meter(&current, cfg.s - 1.0),
            difference: diff,
        });
        if contraction_stalled(&trace.differences(), 3) {
            return Err(Error::NonContraction { step: n + 1, history: trace.differences() });
        }
        current = solved.states;
        if let Some(dir) = &cfg.checkpoint_dir {
            save_iterate(dir, n + 1, &current)?;
        }
        if record {
            metric = solved.metric;
        }
    }
    let metric = metric.expect("last solve records its metric");
    Ok(SchemeRun {
        config: cfg.clone(),
        data: data.clone(),
        strichartz: strichartz_meter(&current)?,
        energy: energy_meter(&current, cfg.s - 1.0),
        trace,
        solution: current,
        metric,
        dt,
        steps,
        data_size: data_size(data, cfg),
    })
}

/// Whether the last `streak` differences each grew over a nonzero predecessor.
pub fn contraction_stalled(differences: &[f64], streak: usize) -> bool {
    let n = differences.len();
    n > streak && differences[n - streak - 1..].windows(2).all(|w| w[0] > 0.0 && w[1] > w[0])
}

fn save_iterate(dir: &std::path::Path, n: usize, series: &TimeSeries<WaveState>) -> Result<()> {
    let last = series.states().last().ok_or(Error::EmptySeries)?;
    write_checkpoint(&dir.join(format!("iterate_{n:03}.dwck")), last.time, &[last.position.clone(), last.velocity.clone()])
}

/// `max_t ||d(u - u_ref)||_{H^{s'-1}} / max_t ||d u_ref||_{H^{s'-1}}` against a
/// direct solve of the mollified quasilinear equation on a grid `refine`
/// times finer (in space and time), started from the full data.
pub fn oracle_error(run: &SchemeRun, law: &dyn MetricLaw, refine: usize) -> Result<f64> {
    let reference = direct_solve(&run.data, law, &run.config, refine)?;
    let n = run.config.points_per_axis;
    let sigma = run.config.s_prime - 1.0;
    let (mut num, mut den): (f64, f64) = (0.0, 0.0);
    for (k, a) in run.solution.states().iter().enumerate() {
        let r = &reference.states()[k * refine];
        let back = WaveState { position: r.position.resampled(n)?, velocity: r.velocity.resampled(n)?, time: r.time };
        num = num.max(gamma_sobolev(&state_difference(a, &back), sigma));
        den = den.max(gamma_sobolev(&back, sigma));
    }
    if den == 0.0 {
        return Ok(num);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests;
