//! Paradifferential remainder of each dyadic block, interval partitions under
//! the Hessian / length / remainder budgets, and Strichartz gluing.

use super::{gamma_sobolev, MetricSeries, SchemeConfig, SchemeRun};
use crate::dyadic::{block, derivative_sup, lowpass_delta};
use crate::eikonal::sym_index;
use crate::error::{Error, Result};
use crate::grid::{lebesgue_norm, trapezoid, Field, TimeSeries, WaveState};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderProfile {
    pub q: i32,
    pub times: Vec<f64>,
    /// `||R_q(t)||_{L^2}`
    pub norms: Vec<f64>,
    /// `||R_q||_{L^1_T L^2}`
    pub total: f64,
    /// `total` divided by the envelope normalization with `C = 1`.
    pub coefficient: f64,
    pub normalization: f64,
    /// Step of the stored series; the time differences err by `O((2^q dt)^2)`.
    pub time_step: f64,
}

/// Third-order one-sided second difference, used at the two ends.
const ONE_SIDED: [(usize, f64); 5] =
    [(0, 35.0 / 12.0), (1, -104.0 / 12.0), (2, 114.0 / 12.0), (3, -56.0 / 12.0), (4, 11.0 / 12.0)];

fn second_time_derivatives(fields: &[Field], times: &[f64]) -> Result<Vec<Field>> {
    let n = fields.len();
    if n < 5 {
        return Err(Error::InvalidArgument("remainder needs at least 5 snapshots".into()));
    }
    let dt = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(Error::InvalidArgument("remainder needs uniformly spaced snapshots".into()));
    }
    let c = 1.0 / (dt * dt);
    let combo = |terms: &[(usize, f64)]| -> Field {
        let mut acc = fields[terms[0].0].scale_real(terms[0].1 * c);
        for &(k, w) in &terms[1..] {
            acc = acc.add(&fields[k].scale_real(w * c));
        }
        acc
    };
    Ok((0..n)
        .map(|k| {
            if k == 0 {
                combo(&ONE_SIDED.map(|(j, w)| (j, w)))
            } else if k == n - 1 {
                combo(&ONE_SIDED.map(|(j, w)| (n - 1 - j, w)))
            } else {
                combo(&[(k - 1, 1.0), (k, -2.0), (k + 1, 1.0)])
            }
        })
        .collect())
}

fn hessian_entry(f: &Field, i: usize, j: usize) -> Field {
    f.apply_multiplier(|xi| Complex64::new(-xi[i] * xi[j], 0.0))
}

fn check_aligned(u_series: &TimeSeries<WaveState>, g_series: &MetricSeries) -> Result<()> {
    if u_series.len() != g_series.len()
        || u_series.times().iter().zip(g_series.times()).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(Error::InvalidArgument("solution and metric series are not aligned in time".into()));
    }
    Ok(())
}

fn truncated_metric(comps: &[Field], q: i32, cfg: &SchemeConfig) -> Result<Vec<Field>> {
    comps.iter().map(|c| lowpass_delta(c, q, cfg.delta, cfg.horizon, cfg.c_cut)).collect()
}

/// `2^{-q(d-1)/2} (2^q T)^{-(s - d/2 - 3/2 + delta)} T^{s - d/2 - 1/2} ||gamma||_{H^{s-1}}`.
pub fn remainder_normalization(q: i32, cfg: &SchemeConfig, gamma: f64) -> f64 {
    let d = cfg.dim as f64;
    let t = cfg.horizon;
    let lam = 2f64.powi(q) * t;
    2f64.powf(-(q as f64) * (d - 1.0) / 2.0) * lam.powf(-(cfg.s - d / 2.0 - 1.5 + cfg.delta)) * t.powf(cfg.s - d / 2.0 - 0.5) * gamma
}

/// `R_q = (d_t^2 - Δ) Δ_q u - S_{delta q} g^{ij} d_i d_j Δ_q u` along the
/// stored series, with second differences in time.
pub fn paralinearize_residual(
    u_series: &TimeSeries<WaveState>,
    g_series: &MetricSeries,
    q: i32,
    cfg: &SchemeConfig,
) -> Result<RemainderProfile> {
    check_aligned(u_series, g_series)?;
    let first = u_series.states().first().ok_or(Error::EmptySeries)?;
    let dim = first.grid().dim();
    let blocks = u_series.states().iter().map(|s| block(&s.position, q)).collect::<Result<Vec<_>>>()?;
    let accel = second_time_derivatives(&blocks, u_series.times())?;
    let mut norms = Vec::with_capacity(blocks.len());
    for (k, uq) in blocks.iter().enumerate() {
        let sg = truncated_metric(&g_series.states()[k], q, cfg)?;
        let mut r = accel[k].sub(&uq.laplacian());
        for i in 0..dim {
            for j in i..dim {
                let g = &sg[sym_index(dim, i, j)];
                if g.max_abs() == 0.0 {
                    continue;
                }
                let w = if i == j { 1.0 } else { 2.0 };
                r = r.sub(&g.mul(&hessian_entry(uq, i, j)).scale_real(w));
            }
        }
        norms.push(lebesgue_norm(&r, 2.0)?);
    }
    let times = u_series.times().to_vec();
    let total = trapezoid(&times, &norms);
    let normalization = remainder_normalization(q, cfg, gamma_sobolev(first, cfg.s - 1.0));
    Ok(RemainderProfile {
        q,
        coefficient: if normalization > 0.0 { total / normalization } else { f64::INFINITY },
        normalization,
        time_step: times[1] - times[0],
        times,
        norms,
        total,
    })
}

/// `t -> ||∇² S_{delta q} g(t)||_inf` (max over components and second derivatives).
pub fn metric_hessian_profile(g_series: &MetricSeries, q: i32, cfg: &SchemeConfig) -> Result<Vec<f64>> {
    g_series
        .states()
        .iter()
        .map(|comps| {
            let dim = comps[0].grid().dim();
            let sg = truncated_metric(comps, q, cfg)?;
            let mut m: f64 = 0.0;
            for c in &sg {
                if c.max_abs() == 0.0 {
                    continue;
                }
                for i in 0..dim {
                    for j in i..dim {
                        m = m.max(hessian_entry(c, i, j).max_abs());
                    }
                }
            }
            Ok(m)
        })
        .collect()
}

/// How cut points may be placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutMode {
    /// Anywhere in time; profiles are linear between samples.
    #[default]
    Continuous,
    /// Only at sample times.
    Grid,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartitionBudget {
    pub horizon: f64,
    /// Hessian budget `eps_hat`; `None` disables it.
    pub hessian: Option<f64>,
    /// `T (2^q T)^{1 - 2 delta - eps}`
    pub length: f64,
    /// Fraction `lambda` of the total remainder; `None` disables it.
    pub remainder_fraction: Option<f64>,
    pub mode: CutMode,
}

impl PartitionBudget {
    pub fn for_scale(cfg: &SchemeConfig, q: i32) -> Self {
        Self {
            horizon: cfg.horizon,
            hessian: Some(cfg.eps_hat),
            length: length_budget(q, cfg.horizon, cfg.delta, cfg.eps),
            remainder_fraction: Some(cfg.lambda_for(q)),
            mode: CutMode::Continuous,
        }
    }

    /// Only the length budget.
    pub fn length_only(mut self) -> Self {
        self.hessian = None;
        self.remainder_fraction = None;
        self
    }
}

/// `T (2^q T)^{1 - 2 delta - eps}`.
pub fn length_budget(q: i32, horizon: f64, delta: f64, eps: f64) -> f64 {
    horizon * (2f64.powi(q) * horizon).powf(1.0 - 2.0 * delta - eps)
}

fn ceil_tolerant(x: f64) -> usize {
    (x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize
}

/// `ceil((2^q T)^{2 delta - 1 + eps})`, the count under the length budget alone.
pub fn length_only_count(q: i32, horizon: f64, delta: f64, eps: f64) -> usize {
    ceil_tolerant(horizon / length_budget(q, horizon, delta, eps))
}

/// `ceil(T rho / eps_hat)`, the count for a constant Hessian density alone.
pub fn constant_density_count(horizon: f64, density: f64, eps_hat: f64) -> usize {
    ceil_tolerant(horizon * density / eps_hat)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub hessian_used: f64,
    pub remainder_used: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub q: i32,
    pub budget: PartitionBudget,
    /// Absolute remainder budget `lambda ||R_q||_{L^1_T}`.
    pub remainder_budget: Option<f64>,
    pub intervals: Vec<Interval>,
}

impl IntervalPartition {
    pub fn count(&self) -> usize {
        self.intervals.len()
    }
}

/// Piecewise-linear profile sampled at `times`.
struct Profile<'a> {
    times: &'a [f64],
    values: &'a [f64],
}

impl Profile<'_> {
    fn value(&self, k: usize, x: f64) -> f64 {
        let h = self.times[k + 1] - self.times[k];
        self.values[k] + (self.values[k + 1] - self.values[k]) * x / h
    }

    /// `int_{t_k}^{t_k + x}`.
    fn partial(&self, k: usize, x: f64) -> f64 {
        let h = self.times[k + 1] - self.times[k];
        self.values[k] * x + 0.5 * (self.values[k + 1] - self.values[k]) / h * x * x
    }

    /// Smallest `x` in `[0, h]` with `partial(k, x) = b` (or `None` if beyond the step).
    fn reach(&self, k: usize, b: f64) -> Option<f64> {
        let h = self.times[k + 1] - self.times[k];
        if self.partial(k, h) < b {
            return None;
        }
        let f0 = self.values[k];
        let slope = (self.values[k + 1] - f0) / h;
        let disc = (f0 * f0 + 2.0 * slope * b).max(0.0);
        let x = if f0 + disc.sqrt() > 0.0 { 2.0 * b / (f0 + disc.sqrt()) } else { h };
        Some(x.clamp(0.0, h))
    }

    /// `int_a^b` by Simpson on each linear piece (exact).
    fn integral(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for k in 0..self.times.len() - 1 {
            let (lo, hi) = (self.times[k].max(a), self.times[k + 1].min(b));
            if hi <= lo {
                continue;
            }
            let f = |t: f64| self.value(k, t - self.times[k]);
            s += (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
        }
        s
    }
}

/// Greedy left-to-right partition of `[0, T]`: each interval grows until one
/// of its budgets is exhausted.
pub fn partition_intervals(
    times: &[f64],
    hessian_profile: &[f64],
    remainder_profile: &[f64],
    q: i32,
    budget: &PartitionBudget,
) -> Result<IntervalPartition> {
    if times.len() < 2 || hessian_profile.len() != times.len() || remainder_profile.len() != times.len() {
        return Err(Error::InvalidArgument("profiles must share a time grid of at least 2 samples".into()));
    }
    let horizon = budget.horizon;
    if times[0].abs() > 1e-12 || (times[times.len() - 1] - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!("profiles must cover [0, {horizon}]")));
    }
    if hessian_profile.iter().chain(remainder_profile).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("profiles must be finite and nonnegative".into()));
    }
    if !(budget.length > 0.0) {
        return Err(Error::InvalidArgument("length budget must be positive".into()));
    }
    let g = Profile { times, values: hessian_profile };
    let r = Profile { times, values: remainder_profile };
    let r_total = r.integral(0.0, horizon);
    // a vanishing remainder leaves nothing to compensate
    let r_budget = budget.remainder_fraction.filter(|_| r_total > 0.0).map(|l| l * r_total);
    let mut budget = *budget;
    budget.horizon = times[times.len() - 1];
    let budget = &budget;
    let intervals = match budget.mode {
        CutMode::Continuous => continuous_cuts(&g, &r, budget, r_budget),
        CutMode::Grid => grid_cuts(&g, &r, budget, r_budget)?,
    };
    let partition = IntervalPartition { q, budget: *budget, remainder_budget: r_budget, intervals };
    certify(&partition, &g, &r)?;
    Ok(partition)
}

fn continuous_cuts(g: &Profile, r: &Profile, budget: &PartitionBudget, r_budget: Option<f64>) -> Vec<Interval> {
    let times = g.times;
    let horizon = budget.horizon;
    let close = 1e-12 * horizon;
    let mut out = Vec::new();
    let mut start = 0.0;
    let mut k = 0;
    let mut x0 = 0.0;
    while start < horizon - close {
        let (mut used_g, mut used_r) = (0.0, 0.0);
        let limit = (start + budget.length).min(horizon);
        let mut end;
        loop {
            let h = times[k + 1] - times[k];
            let step_end = times[k + 1];
            // cut candidates inside [times[k] + x0, step_end]
            let mut cut = if limit <= step_end || k + 2 == times.len() { limit.min(step_end) } else { f64::INFINITY };
            if let Some(bg) = budget.hessian {
                if let Some(x) = g.reach(k, bg - used_g + g.partial(k, x0)) {
                    cut = cut.min(times[k] + x);
                }
            }
            if let Some(br) = r_budget {
                if let Some(x) = r.reach(k, br - used_r + r.partial(k, x0)) {
                    cut = cut.min(times[k] + x);
                }
            }
            if cut.is_finite() {
                let x = (cut - times[k]).clamp(x0, h);
                used_g += g.partial(k, x) - g.partial(k, x0);
                used_r += r.partial(k, x) - r.partial(k, x0);
                end = times[k] + x;
                if h - x <= close && k + 2 < times.len() {
                    k += 1;
                    x0 = 0.0;
                } else {
                    x0 = x;
                }
                break;
            }
            used_g += g.partial(k, h) - g.partial(k, x0);
            used_r += r.partial(k, h) - r.partial(k, x0);
            k += 1;
            x0 = 0.0;
        }
        if horizon - end <= close {
            end = horizon;
        }
        out.push(Interval { start, end, hessian_used: used_g, remainder_used: used_r });
        start = end;
    }
    out
}

fn grid_cuts(g: &Profile, r: &Profile, budget: &PartitionBudget, r_budget: Option<f64>) -> Result<Vec<Interval>> {
    let times = g.times;
    let fits = |a: usize, b: usize| -> (bool, Option<&'static str>, f64, f64) {
        let (ta, tb) = (times[a], times[b]);
        let ug = g.integral(ta, tb);
        let ur = r.integral(ta, tb);
        let over = if tb - ta > budget.length * (1.0 + 1e-12) {
            Some("length")
        } else if budget.hessian.is_some_and(|bg| ug > bg * (1.0 + 1e-12)) {
            Some("hessian")
        } else if r_budget.is_some_and(|br| ur > br * (1.0 + 1e-12)) {
            Some("remainder")
        } else {
            None
        };
        (over.is_none(), over, ug, ur)
    };
    let mut out = Vec::new();
    let mut a = 0;
    let last = times.len() - 1;
    while a < last {
        let (ok, why, _, _) = fits(a, a + 1);
        if !ok {
            return Err(Error::AtomicViolation { t0: times[a], t1: times[a + 1], budget: why.unwrap_or("?").to_string() });
        }
        let mut b = a + 1;
        while b < last && fits(a, b + 1).0 {
            b += 1;
        }
        let (_, _, ug, ur) = fits(a, b);
        out.push(Interval { start: times[a], end: times[b], hessian_used: ug, remainder_used: ur });
        a = b;
    }
    Ok(out)
}

/// Re-verifies tiling and every budget by independent quadrature.
fn certify(p: &IntervalPartition, g: &Profile, r: &Profile) -> Result<()> {
    let horizon = p.budget.horizon;
    let tol = 1e-9;
    let first = p.intervals.first().ok_or_else(|| Error::Budget("empty partition".into()))?;
    if first.start != 0.0 || p.intervals.last().map(|i| i.end) != Some(horizon) {
        return Err(Error::Budget("intervals do not cover [0, T]".into()));
    }
    for w in p.intervals.windows(2) {
        if w[0].end != w[1].start {
            return Err(Error::Budget(format!("gap or overlap at t = {}", w[0].end)));
        }
    }
    for iv in &p.intervals {
        if !(iv.end > iv.start) {
            return Err(Error::Budget(format!("empty interval at t = {}", iv.start)));
        }
        if iv.length() > p.budget.length * (1.0 + tol) {
            return Err(Error::Budget(format!("length {} exceeds {}", iv.length(), p.budget.length)));
        }
        if let Some(bg) = p.budget.hessian {
            let used = g.integral(iv.start, iv.end);
            if used > bg * (1.0 + tol) + 1e-300 {
                return Err(Error::Budget(format!("Hessian integral {used} exceeds {bg} on [{}, {}]", iv.start, iv.end)));
            }
        }
        if let Some(br) = p.remainder_budget {
            let used = r.integral(iv.start, iv.end);
            if used > br * (1.0 + tol) + 1e-300 {
                return Err(Error::Budget(format!("remainder integral {used} exceeds {br} on [{}, {}]", iv.start, iv.end)));
            }
        }
    }
    Ok(())
}

/// `int_a^b f^2` for the piecewise-linear interpolant of `values` (exact).
pub fn interval_l2_squared(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..times.len().saturating_sub(1) {
        let (t0, t1) = (times[k], times[k + 1]);
        let (lo, hi) = (t0.max(a), t1.min(b));
        if hi <= lo {
            continue;
        }
        let f = |t: f64| values[k] + (values[k + 1] - values[k]) * (t - t0) / (t1 - t0);
        let (p, m) = (f(lo), f(hi));
        s += (hi - lo) * (p * p + p * m + m * m) / 3.0;
    }
    s
}

/// Inputs of the global envelope for one block.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopeInputs {
    pub dim: usize,
    pub eps: f64,
    pub beta: f64,
    /// `||gamma_q||`
    pub data: f64,
    /// `||R_q||_{L^1_T L^2}`
    pub remainder: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlueReport {
    pub q: i32,
    pub count: usize,
    /// `(sum_l m_l^2)^{1/2}`
    pub global: f64,
    pub envelope: f64,
    /// `envelope / global`
    pub ratio: f64,
}

/// Square-sums per-interval norms and compares against
/// `(2^q T)^beta 2^{q(d-1)/2} (2^q T)^{1/6 + eps/2} (||gamma_q|| + (2^q T)^{-1/3} ||R_q||)`.
pub fn glue_strichartz(norms: &[f64], q: i32, horizon: f64, env: &EnvelopeInputs) -> GlueReport {
    let global = norms.iter().map(|m| m * m).sum::<f64>().sqrt();
    let lam = 2f64.powi(q) * horizon;
    let envelope = lam.powf(env.beta)
        * 2f64.powf(q as f64 * (env.dim as f64 - 1.0) / 2.0)
        * lam.powf(1.0 / 6.0 + env.eps / 2.0)
        * (env.data + lam.powf(-1.0 / 3.0) * env.remainder);
    GlueReport { q, count: norms.len(), global, envelope, ratio: if global > 0.0 { envelope / global } else { f64::INFINITY } }
}

/// Everything measured for one block of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleReport {
    pub q: i32,
    pub remainder: RemainderProfile,
    pub hessian: Vec<f64>,
    pub partition: IntervalPartition,
    /// `||du_q||_{L^2_{I} L^inf}` per interval.
    pub local_norms: Vec<f64>,
    pub glue: GlueReport,
}

/// Remainder, partition and gluing for each `q` of a finished run (in parallel).
pub fn analyze_scales(run: &SchemeRun, qs: &[i32]) -> Result<Vec<ScaleReport>> {
    qs.par_iter().map(|&q| analyze_scale(run, q)).collect()
}

pub fn analyze_scale(run: &SchemeRun, q: i32) -> Result<ScaleReport> {
    let cfg = &run.config;
    let remainder = paralinearize_residual(&run.solution, &run.metric, q, cfg)?;
    let hessian = metric_hessian_profile(&run.metric, q, cfg)?;
    let times = run.solution.times();
    let partition = partition_intervals(times, &hessian, &remainder.norms, q, &PartitionBudget::for_scale(cfg, q))?;
    let sups: Vec<f64> = run
        .solution
        .states()
        .iter()
        .map(|s| Ok(derivative_sup(&WaveState { position: block(&s.position, q)?, velocity: block(&s.velocity, q)?, time: s.time })))
        .collect::<Result<_>>()?;
    let local_norms: Vec<f64> =
        partition.intervals.iter().map(|iv| interval_l2_squared(times, &sups, iv.start, iv.end).sqrt()).collect();
    let data_q = WaveState { position: block(&run.data.position, q)?, velocity: block(&run.data.velocity, q)?, time: 0.0 };
    let env = EnvelopeInputs { dim: cfg.dim, eps: cfg.eps, beta: 0.0, data: data_q.gamma_norm(), remainder: remainder.total };
    let glue = glue_strichartz(&local_norms, q, cfg.horizon, &env);
    Ok(ScaleReport { q, remainder, hessian, partition, local_norms, glue })
}

/// `(sum_q c_q^2)^{1/2}`.
pub fn coefficient_l2(reports: &[ScaleReport]) -> f64 {
    reports.iter().map(|r| r.remainder.coefficient.powi(2)).sum::<f64>().sqrt()
}
