//! Parametrix assembly over the lattice frequencies of the data and its
//! residual against a spectral reference solve.

use super::phase::{solve_eikonal, solve_transport, EikonalConfig, PhaseTable, SymbolTable};
use super::{MetricSnapshot, StandardMetric};
use crate::dyadic::{lowpass_delta, DyadicCutoff};
use crate::error::{Error, Result};
use crate::grid::{fft, Field, Grid, WaveState};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParametrixConfig {
    pub eikonal: EikonalConfig,
    /// Number of transport terms beyond the leading one (`M <= 2`).
    pub order: usize,
    /// Chebyshev nodes on the arc of directions (d = 2).
    pub angular_nodes: usize,
    /// Solve every lattice direction directly when there are at most this many.
    pub max_direct_directions: usize,
    /// Assemble past the first caustic instead of failing.
    pub allow_caustic: bool,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        Self {
            eikonal: EikonalConfig::default(),
            order: 1,
            angular_nodes: 16,
            max_direct_directions: 24,
            allow_caustic: false,
        }
    }
}

/// Amplitudes of the two branches `e^{i(x.xi -+ t H)}` per lattice frequency.
#[derive(Debug, Clone)]
pub struct BranchData {
    pub indices: Vec<usize>,
    pub frequencies: Vec<[f64; 3]>,
    pub minus: Vec<Complex64>,
    pub plus: Vec<Complex64>,
    /// Largest 2x2 condition number over the nodes.
    pub condition: f64,
}

fn mean_speed(metric: &MetricSnapshot, omega: &[f64; 3]) -> f64 {
    let d = metric.dim();
    let g = metric.grid();
    (0..g.len())
        .map(|p| {
            let a = metric.matrix_at(p);
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += omega[i] * a[i][j] * omega[j];
                }
            }
            q.sqrt()
        })
        .sum::<f64>()
        / g.len() as f64
}

/// `|xi|` times the spatial mean of `H(x, xi/|xi|)`: the frequency used to
/// split data into branches.
pub fn branch_frequency(metric: &MetricSnapshot, xi: &[f64; 3]) -> f64 {
    let lam = norm(xi);
    lam * mean_speed(metric, &xi.map(|v| v / lam))
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Split `(u_0, u_1)` into branches node by node, using the spatial mean of
/// `H(x, xi)` as the branch frequency in the 2x2 system
/// `a_- + a_+ = u0_hat`, `-i w a_- + i w a_+ = u1_hat`.
pub fn match_branches(metric: &MetricSnapshot, u0: &Field, u1: &Field) -> Result<BranchData> {
    u0.check_same_grid(u1)?;
    let g = *u0.grid();
    let (s0, s1) = (u0.spectrum(), u1.spectrum());
    let peak = s0.iter().chain(s1.iter()).map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidArgument("zero data".into()));
    }
    let mut out = BranchData { indices: vec![], frequencies: vec![], minus: vec![], plus: vec![], condition: 1.0 };
    for i in 0..g.len() {
        if s0[i].norm() <= 1e-14 * peak && s1[i].norm() <= 1e-14 * peak {
            continue;
        }
        let xi = g.frequency(i);
        let lam = norm(&xi);
        if lam == 0.0 {
            return Err(Error::NonzeroMean(s0[i].norm().max(s1[i].norm())));
        }
        let w = branch_frequency(metric, &xi);
        let minus = 0.5 * (s0[i] + I * s1[i] / w);
        let plus = 0.5 * (s0[i] - I * s1[i] / w);
        out.indices.push(i);
        out.frequencies.push(xi);
        out.minus.push(minus);
        out.plus.push(plus);
        out.condition = out.condition.max(w.max(1.0 / w));
    }
    Ok(out)
}

/// How phase/amplitude fields at an arbitrary direction are obtained from
/// the solved nodes.
#[derive(Debug, Clone)]
pub enum DirectionSampler {
    /// Every needed direction was solved.
    Exact(Vec<[f64; 3]>),
    /// Chebyshev-Lobatto angles on `[lo, hi]` (d = 2).
    Arc { lo: f64, hi: f64, angles: Vec<f64> },
}

impl DirectionSampler {
    pub fn directions(&self) -> Vec<[f64; 3]> {
        match self {
            DirectionSampler::Exact(v) => v.clone(),
            DirectionSampler::Arc { angles, .. } => angles.iter().map(|a| [a.cos(), a.sin(), 0.0]).collect(),
        }
    }

    /// Interpolation weights over the nodes for the unit direction `omega`.
    pub fn weights(&self, omega: &[f64; 3]) -> Vec<(usize, f64)> {
        match self {
            DirectionSampler::Exact(v) => {
                let best = v
                    .iter()
                    .enumerate()
                    .map(|(k, d)| (k, norm(&[d[0] - omega[0], d[1] - omega[1], d[2] - omega[2]])))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                vec![(best.0, 1.0)]
            }
            DirectionSampler::Arc { lo, hi, angles } => {
                let mut a = omega[1].atan2(omega[0]);
                let mid = 0.5 * (lo + hi);
                while a - mid > PI {
                    a -= 2.0 * PI;
                }
                while a - mid < -PI {
                    a += 2.0 * PI;
                }
                let k = angles.len();
                let bw = |j: usize| {
                    let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                    if j == 0 || j + 1 == k {
                        0.5 * s
                    } else {
                        s
                    }
                };
                if let Some(j) = angles.iter().position(|&t| (t - a).abs() < 1e-15) {
                    return vec![(j, 1.0)];
                }
                let terms: Vec<f64> = (0..k).map(|j| bw(j) / (a - angles[j])).collect();
                let s: f64 = terms.iter().sum();
                terms.into_iter().enumerate().map(|(j, t)| (j, t / s)).collect()
            }
        }
    }
}

fn unique_directions(dirs: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::new();
    for d in dirs {
        if !out.iter().any(|o| norm(&[o[0] - d[0], o[1] - d[1], o[2] - d[2]]) < 1e-13) {
            out.push(*d);
        }
    }
    out
}

/// Pick the solved directions for a set of needed unit directions.
pub fn direction_sampler(dim: usize, needed: &[[f64; 3]], cfg: &ParametrixConfig) -> Result<DirectionSampler> {
    let uniq = unique_directions(needed);
    if uniq.len() <= cfg.max_direct_directions || dim != 2 {
        if uniq.len() > 64 * cfg.max_direct_directions.max(1) {
            return Err(Error::Quadrature(format!("{} distinct directions", uniq.len())));
        }
        return Ok(DirectionSampler::Exact(uniq));
    }
    let mut ang: Vec<f64> = uniq.iter().map(|o| o[1].atan2(o[0])).collect();
    ang.sort_by(f64::total_cmp);
    // the arc is the complement of the widest circular gap
    let k = ang.len();
    let (mut gap, mut at) = (ang[0] + 2.0 * PI - ang[k - 1], 0);
    for j in 1..k {
        if ang[j] - ang[j - 1] > gap {
            gap = ang[j] - ang[j - 1];
            at = j;
        }
    }
    let lo = ang[at];
    let hi = if at == 0 { ang[k - 1] } else { ang[at - 1] + 2.0 * PI };
    if hi - lo > 1.5 * PI {
        return Err(Error::Quadrature(format!("directions span {:.3} rad; too wide for arc interpolation", hi - lo)));
    }
    let pad = 1e-3 * (hi - lo).max(1e-3);
    let (lo, hi) = (lo - pad, hi + pad);
    let n = cfg.angular_nodes.max(2);
    let angles = (0..n).map(|j| 0.5 * (lo + hi) + 0.5 * (hi - lo) * (PI * j as f64 / (n - 1) as f64).cos()).collect();
    Ok(DirectionSampler::Arc { lo, hi, angles })
}

/// Phase, amplitudes and branch data for `(u_0, u_1)` on `[0, times.last]`.
#[derive(Debug, Clone)]
pub struct Parametrix {
    pub metric: MetricSnapshot,
    pub grid: Grid,
    pub branches: BranchData,
    pub sampler: DirectionSampler,
    pub phase: PhaseTable,
    pub symbols: SymbolTable,
}

fn check_compatible(metric: &MetricSnapshot, grid: &Grid) -> Result<()> {
    let m = metric.grid();
    if m.dim() != grid.dim() || (m.box_scale() - grid.box_scale()).abs() > 1e-12 * m.box_scale() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub fn build_parametrix(
    metric: &MetricSnapshot,
    u0: &Field,
    u1: &Field,
    times: &[f64],
    cfg: &ParametrixConfig,
) -> Result<Parametrix> {
    let grid = *u0.grid();
    check_compatible(metric, &grid)?;
    let branches = match_branches(metric, u0, u1)?;
    let peak = branches.minus.iter().chain(&branches.plus).map(|z| z.norm()).fold(0.0, f64::max);
    let mut needed = Vec::new();
    for (k, xi) in branches.frequencies.iter().enumerate() {
        let om = xi.map(|v| v / norm(xi));
        if branches.minus[k].norm() > 1e-15 * peak {
            needed.push(om);
        }
        if branches.plus[k].norm() > 1e-15 * peak {
            needed.push(om.map(|v| -v));
        }
    }
    let sampler = direction_sampler(grid.dim(), &needed, cfg)?;
    let t_end = *times.last().ok_or(Error::EmptySeries)?;
    let reach = metric.max_speed_squared().sqrt() * t_end;
    if reach > 0.5 * PI * grid.box_scale() {
        return Err(Error::Quadrature(format!(
            "travel {reach:.3} exceeds a quarter period; lattice nodes at spacing 1/L alias the phase"
        )));
    }
    let phase = solve_eikonal(metric, &sampler.directions(), times, &cfg.eikonal)?;
    if phase.validity < t_end && !cfg.allow_caustic {
        let node = (0..phase.directions.len())
            .min_by(|&a, &b| phase.caustic_times[a].unwrap_or(f64::INFINITY).total_cmp(&phase.caustic_times[b].unwrap_or(f64::INFINITY)))
            .unwrap_or(0);
        return Err(Error::Caustic { time: phase.validity, det: phase.min_determinants[node] });
    }
    let symbols = solve_transport(&phase, metric, cfg.order, &cfg.eikonal)?;
    Ok(Parametrix { metric: metric.clone(), grid, branches, sampler, phase, symbols })
}

/// What to take from the node tables.
#[derive(Clone, Copy)]
enum Snapshot {
    /// `(theta, sigma)` at output time `k`.
    At(usize),
    /// `(0, d_t sigma - i lambda h)` at `t = 0`.
    InitialRate,
}

impl Parametrix {
    /// Coarse `(theta, amplitude)` for unit direction `omega` and `|xi| = lam`.
    fn node_fields(&self, omega: &[f64; 3], lam: f64, what: Snapshot) -> (Vec<f64>, Vec<Complex64>) {
        let np = self.phase.grid.len();
        let mut theta = vec![0.0; np];
        let mut amp = vec![Complex64::new(0.0, 0.0); np];
        for (node, w) in self.sampler.weights(omega) {
            match what {
                Snapshot::At(k) => {
                    for (t, v) in theta.iter_mut().zip(&self.phase.theta[node][k]) {
                        *t += w * v;
                    }
                    for m in 0..=self.symbols.order {
                        let s = w * lam.powi(-(m as i32));
                        for (a, v) in amp.iter_mut().zip(&self.symbols.tau[node][m][k]) {
                            *a += v * s;
                        }
                    }
                }
                Snapshot::InitialRate => {
                    for (a, h) in amp.iter_mut().zip(&self.symbols.initial_speed[node]) {
                        *a -= I * (w * lam * h);
                    }
                    for m in 0..=self.symbols.order {
                        let s = w * lam.powi(-(m as i32));
                        for (a, v) in amp.iter_mut().zip(&self.symbols.initial_rates[node][m]) {
                            *a += v * s;
                        }
                    }
                }
            }
        }
        (theta, amp)
    }

    fn upsample(&self, coarse: Vec<Complex64>) -> Vec<Complex64> {
        let cg = self.phase.grid;
        let f = Field::new(cg, coarse).expect("coarse grid");
        f.resampled(self.grid.points_per_axis()).expect("power-of-two grids").into_samples()
    }

    fn evaluate(&self, what: Snapshot) -> Field {
        let n = self.grid.len();
        let b = &self.branches;
        let peak = b.minus.iter().chain(&b.plus).map(|z| z.norm()).fold(0.0, f64::max);
        let points = self.grid.points();
        let contributions: Vec<Vec<Complex64>> = (0..b.indices.len())
            .into_par_iter()
            .map(|k| {
                let xi = b.frequencies[k];
                let lam = norm(&xi);
                let om = xi.map(|v| v / lam);
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                for (sign, a) in [(1.0, b.minus[k]), (-1.0, b.plus[k])] {
                    if a.norm() <= 1e-15 * peak {
                        continue;
                    }
                    let dir = om.map(|v| sign * v);
                    let (theta, amp) = self.node_fields(&dir, lam, what);
                    let theta = self.upsample(theta.into_iter().map(|t| Complex64::new(t, 0.0)).collect());
                    let amp = self.upsample(amp);
                    for p in 0..n {
                        let x = points[p];
                        let carrier = Complex64::from_polar(1.0, x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2]);
                        // plus branch: conjugate of the minus branch at -xi
                        let local = Complex64::from_polar(1.0, lam * theta[p].re) * amp[p];
                        let local = if sign > 0.0 { local } else { local.conj() };
                        acc[p] += a * carrier * local;
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![Complex64::new(0.0, 0.0); n];
        for c in contributions {
            for (t, v) in total.iter_mut().zip(c) {
                *t += v;
            }
        }
        Field::new(self.grid, total).expect("output grid")
    }

    /// `u` at output time index `k`.
    pub fn at(&self, k: usize) -> Field {
        self.evaluate(Snapshot::At(k))
    }

    /// `(u, d_t u)` of the parametrix at `t = 0`.
    pub fn cauchy_data(&self) -> WaveState {
        WaveState::new(self.at(0), self.evaluate(Snapshot::InitialRate), 0.0).expect("same grid")
    }

    pub fn times(&self) -> &[f64] {
        &self.phase.times
    }
}

/// `u` at every output time of the parametrix.
pub fn assemble_parametrix(p: &Parametrix) -> Result<crate::grid::TimeSeries<Field>> {
    let states = (0..p.times().len()).map(|k| p.at(k)).collect();
    crate::grid::TimeSeries::new(p.times().to_vec(), states)
}

// ---------------------------------------------------------------- reference

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// `dt <= cfl * dx / c_max`.
    pub cfl: f64,
    /// `dt <= phase_step / omega_max` with `omega_max` the top data frequency times `c_max`.
    pub phase_step: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { cfl: 0.25, phase_step: 0.02 }
    }
}

struct Operator {
    grid: Grid,
    a: Vec<[[f64; 3]; 3]>,
    k: Vec<[f64; 3]>,
}

impl Operator {
    /// `A : grad^2 u`.
    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let (n, d) = (self.grid.points_per_axis(), self.grid.dim());
        let spec = fft::forward(u, n, d);
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        for i in 0..d {
            for j in i..d {
                let s: Vec<Complex64> = spec.iter().zip(&self.k).map(|(c, k)| c * (-k[i] * k[j])).collect();
                let h = fft::inverse(&s, n, d);
                let f = if i == j { 1.0 } else { 2.0 };
                for p in 0..u.len() {
                    out[p] += h[p] * (f * self.a[p][i][j]);
                }
            }
        }
        out
    }
}

/// Pseudospectral RK4 solve of `u_tt = A : grad^2 u` to time `t_end` (exact
/// spectral propagation when `G = 0`).
/// Returns the final state and the number of steps.
pub fn reference_solve(
    metric: &MetricSnapshot,
    initial: &WaveState,
    t_end: f64,
    cfg: &ReferenceConfig,
) -> Result<(WaveState, usize)> {
    let grid = *initial.grid();
    check_compatible(metric, &grid)?;
    if metric.is_flat() {
        return Ok((crate::waveprop::evolve_free(initial, t_end), 0));
    }
    let m = metric.resampled(grid.points_per_axis())?;
    let op = Operator { grid, a: (0..grid.len()).map(|p| m.matrix_at(p)).collect(), k: grid.frequencies() };
    let c_max = m.max_speed_squared().sqrt();
    let reach = initial.position.spectral_reach(1e-14).max(initial.velocity.spectral_reach(1e-14)).max(1.0);
    let limit = (cfg.cfl * grid.spacing() / c_max).min(cfg.phase_step / (c_max * reach));
    let steps = ((t_end / limit).ceil() as usize).max(1);
    let dt = t_end / steps as f64;
    let mut u = initial.position.samples().to_vec();
    let mut v = initial.velocity.samples().to_vec();
    let axpy = |x: &[Complex64], s: f64, y: &[Complex64]| -> Vec<Complex64> { x.iter().zip(y).map(|(a, b)| a + b * s).collect() };
    for _ in 0..steps {
        let (k1u, k1v) = (v.clone(), op.apply(&u));
        let (u2, v2) = (axpy(&u, 0.5 * dt, &k1u), axpy(&v, 0.5 * dt, &k1v));
        let (k2u, k2v) = (v2.clone(), op.apply(&u2));
        let (u3, v3) = (axpy(&u, 0.5 * dt, &k2u), axpy(&v, 0.5 * dt, &k2v));
        let (k3u, k3v) = (v3.clone(), op.apply(&u3));
        let (u4, v4) = (axpy(&u, dt, &k3u), axpy(&v, dt, &k3v));
        let (k4u, k4v) = (v4, op.apply(&u4));
        for p in 0..u.len() {
            u[p] += (k1u[p] + 2.0 * k2u[p] + 2.0 * k3u[p] + k4u[p]) * (dt / 6.0);
            v[p] += (k1v[p] + 2.0 * k2v[p] + 2.0 * k3v[p] + k4v[p]) * (dt / 6.0);
        }
    }
    Ok((WaveState::new(Field::new(grid, u)?, Field::new(grid, v)?, initial.time + t_end)?, steps))
}

// ---------------------------------------------------------------- budgets

/// Interval constraints: `|I| <= T (2^q T)^{1 - 2 delta - eps}` and
/// `|I| * ||grad^2 G_delta||_inf <= eps_hat`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntervalBudget {
    pub delta: f64,
    pub eps: f64,
    pub eps_hat: f64,
    pub horizon: f64,
    pub cutoff_constant: f64,
}

impl Default for IntervalBudget {
    fn default() -> Self {
        Self { delta: 2.0 / 3.0, eps: 0.05, eps_hat: 0.1, horizon: 1.0, cutoff_constant: 1.0 }
    }
}

impl IntervalBudget {
    pub fn length_limit(&self, q: i32) -> f64 {
        let t = self.horizon;
        t * (2f64.powi(q) * t).powf(1.0 - 2.0 * self.delta - self.eps)
    }

    /// `||grad^2 G_delta||_{L^inf}` with `G_delta` the low-pass truncated metric.
    pub fn curvature(&self, metric: &MetricSnapshot, q: i32) -> Result<f64> {
        let d = metric.dim();
        let mut worst: f64 = 0.0;
        for c in metric.components() {
            let g = lowpass_delta(c, q, self.delta, self.horizon, self.cutoff_constant)?;
            for a in 0..d {
                for b in a..d {
                    let h = g.derivative(a).derivative(b);
                    worst = worst.max(h.max_abs());
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub q: i32,
    pub order: usize,
    pub interval: f64,
    pub length_limit: f64,
    /// `|I| * ||grad^2 G_delta||_inf`.
    pub curvature_budget: f64,
    pub residual: f64,
    pub caustic_time: Option<f64>,
    pub min_determinant: f64,
    pub branch_condition: f64,
    pub points_per_axis: usize,
    pub directions: usize,
    pub lattice_nodes: usize,
    pub reference_steps: usize,
}

/// Relative `L^2` error at the interval end between the parametrix and the
/// reference solve started from the parametrix's own Cauchy data.
#[allow(clippy::too_many_arguments)]
pub fn parametrix_residual(
    metric: &MetricSnapshot,
    u0: &Field,
    u1: &Field,
    q: i32,
    interval: f64,
    budget: Option<&IntervalBudget>,
    cfg: &ParametrixConfig,
    reference: &ReferenceConfig,
) -> Result<ResidualReport> {
    let (limit, curv) = match budget {
        Some(b) => {
            let limit = b.length_limit(q);
            if interval > limit * (1.0 + 1e-12) {
                return Err(Error::Budget(format!(
                    "interval {interval:.4} exceeds the asymptotic-calculus limit T(2^qT)^(1-2delta-eps) = {limit:.4}"
                )));
            }
            let c = b.curvature(metric, q)? * interval;
            if c > b.eps_hat {
                return Err(Error::Budget(format!(
                    "interval {interval:.4} gives |I| ||grad^2 G_delta|| = {c:.4} above the phase budget {}",
                    b.eps_hat
                )));
            }
            (limit, c)
        }
        None => (f64::INFINITY, f64::NAN),
    };
    let p = build_parametrix(metric, u0, u1, &[0.0, interval], cfg)?;
    let start = p.cauchy_data();
    let (end, steps) = reference_solve(metric, &start, interval, reference)?;
    let approx = p.at(1);
    let residual = approx.relative_distance(&end.position);
    let caustic_time = p.phase.caustic_times.iter().flatten().copied().fold(None, |a: Option<f64>, b| Some(a.map_or(b, |v| v.min(b))));
    Ok(ResidualReport {
        q,
        order: cfg.order,
        interval,
        length_limit: limit,
        curvature_budget: curv,
        residual,
        caustic_time,
        min_determinant: p.phase.min_determinants.iter().copied().fold(f64::INFINITY, f64::min),
        branch_condition: p.branches.condition,
        points_per_axis: p.grid.points_per_axis(),
        directions: p.phase.directions.len(),
        lattice_nodes: p.branches.indices.len(),
        reference_steps: steps,
    })
}

// ------------------------------------------------------------- experiment

/// A single-branch packet in the `2^q` block: spectrum
/// `bump(|xi - xi_0| / r) psi(2^{-q} |xi|)` with `|xi_0| = 1.5 * 2^q` and
/// `r = radius_factor * 2^{q/2}`, `u_1` chosen so only the minus branch is excited.
pub fn packet_data(
    grid: &Grid,
    metric: &MetricSnapshot,
    q: i32,
    angle: f64,
    radius_factor: f64,
) -> Result<(Field, Field)> {
    let cut = DyadicCutoff::default();
    let center = 1.5 * 2f64.powi(q);
    let r = radius_factor * 2f64.powf(0.5 * q as f64);
    let c = [center * angle.cos(), if grid.dim() > 1 { center * angle.sin() } else { 0.0 }, 0.0];
    let spec0: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let xi = grid.frequency(i);
            let z = norm(&[xi[0] - c[0], xi[1] - c[1], xi[2] - c[2]]) / r;
            let b = if z < 1.0 { (1.0 - 1.0 / (1.0 - z * z)).exp() } else { 0.0 };
            Complex64::new(b * cut.homogeneous_block_multiplier(q, norm(&xi)), 0.0)
        })
        .collect();
    if spec0.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::InvalidArgument("packet holds no lattice frequency".into()));
    }
    let spec1: Vec<Complex64> = spec0
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.norm() == 0.0 {
                return *a;
            }
            -I * a * branch_frequency(metric, &grid.frequency(i))
        })
        .collect();
    let u0 = Field::from_spectrum(*grid, spec0)?;
    let scale = 1.0 / u0.spectral_l2_norm();
    Ok((u0.scale_real(scale), Field::from_spectrum(*grid, spec1)?.scale_real(scale)))
}

/// Smallest power of two `n >= 16` with `n / (2L) >= oversample * c_max * band`.
pub fn points_for_band(box_scale: f64, band: f64, c_max: f64, oversample: f64) -> usize {
    let mut n = 16;
    while (n as f64) / (2.0 * box_scale) < oversample * c_max * band {
        n *= 2;
    }
    n
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParametrixExperimentConfig {
    pub dim: usize,
    pub metrics: Vec<StandardMetric>,
    pub amplitude: f64,
    pub q_ladder: Vec<i32>,
    pub budget: IntervalBudget,
    pub parametrix: ParametrixConfig,
    pub reference: ReferenceConfig,
    pub packet_angle: f64,
    pub packet_radius_factor: f64,
    /// Reference grid resolves `oversample` times the data band.
    pub oversample: f64,
}

impl Default for ParametrixExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            metrics: StandardMetric::SUITE.to_vec(),
            amplitude: 0.12,
            q_ladder: (3..=6).collect(),
            budget: IntervalBudget::default(),
            parametrix: ParametrixConfig::default(),
            reference: ReferenceConfig::default(),
            packet_angle: 0.3,
            packet_radius_factor: 1.0,
            oversample: 1.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricLadder {
    pub metric: StandardMetric,
    pub reports: Vec<ResidualReport>,
    /// `residual(q) / residual(q + 1)` for consecutive ladder points.
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametrixExperimentResult {
    pub ladders: Vec<MetricLadder>,
    pub min_factor: f64,
}

/// One ladder point: box scale 1, the full length-limited interval.
pub fn parametrix_ladder_point(cfg: &ParametrixExperimentConfig, metric: StandardMetric, q: i32) -> Result<ResidualReport> {
    let base = Grid::new(cfg.dim, cfg.parametrix.eikonal.coarse_points, 1.0)?;
    let coarse_metric = metric.build(base, cfg.amplitude)?;
    let band = 1.5 * 2f64.powi(q) + cfg.packet_radius_factor * 2f64.powf(0.5 * q as f64);
    let n = points_for_band(1.0, band, coarse_metric.max_speed_squared().sqrt(), cfg.oversample);
    let grid = Grid::new(cfg.dim, n, 1.0)?;
    let m = coarse_metric.resampled(n)?;
    let (u0, u1) = packet_data(&grid, &m, q, cfg.packet_angle, cfg.packet_radius_factor)?;
    let interval = cfg.budget.length_limit(q);
    parametrix_residual(&m, &u0, &u1, q, interval, Some(&cfg.budget), &cfg.parametrix, &cfg.reference)
}

pub fn parametrix_experiment(cfg: &ParametrixExperimentConfig) -> Result<ParametrixExperimentResult> {
    let mut ladders = Vec::new();
    for &metric in &cfg.metrics {
        let reports = cfg.q_ladder.iter().map(|&q| parametrix_ladder_point(cfg, metric, q)).collect::<Result<Vec<_>>>()?;
        let factors = reports.windows(2).map(|w| w[0].residual / w[1].residual).collect();
        ladders.push(MetricLadder { metric, reports, factors });
    }
    let min_factor = ladders.iter().flat_map(|l| l.factors.iter().copied()).fold(f64::INFINITY, f64::min);
    Ok(ParametrixExperimentResult { ladders, min_factor })
}

