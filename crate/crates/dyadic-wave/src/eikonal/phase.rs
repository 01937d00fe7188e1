//! Eulerian phase and amplitudes on a coarse grid. For a direction `omega` the
//! phase is `Phi = |xi| S`, `S = x.omega + theta(t, x)` with `theta` periodic and
//! `theta_t = -h`, `h = H(x, grad S)`. The amplitude `sigma = sum_m tau_m |xi|^{-m}`
//! obeys `tau_m,t + v.grad tau_m + c tau_m = -i P tau_{m-1} / (2h)` with
//! `v = A grad S / h`, `c = (A : grad^2 S - v.grad h) / (2h)`, `P = d_t^2 - A : grad^2`.

use super::rays::{hamiltonian_flow, PhasePoint};
use super::{sym_index, MetricSnapshot};
use crate::error::{Error, Result};
use crate::grid::{fft, Grid};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EikonalConfig {
    /// Points per axis of the grid carrying the phase and amplitudes.
    pub coarse_points: usize,
    /// Upper bound on the time step.
    pub max_step: f64,
    /// Caustic when `|det J|` drops below this.
    pub caustic_threshold: f64,
    /// Rays are launched from every `ray_stride`-th coarse point per axis.
    pub ray_stride: usize,
    /// Ray integration steps per unit time.
    pub ray_steps_per_unit: usize,
    /// Relative step of the centered difference used for `d_t^2 tau`.
    pub difference_step: f64,
}

impl Default for EikonalConfig {
    fn default() -> Self {
        Self {
            coarse_points: 32,
            max_step: 0.005,
            caustic_threshold: 0.05,
            ray_stride: 4,
            ray_steps_per_unit: 400,
            difference_step: 1e-4,
        }
    }
}

/// `theta` samples per direction node and output time.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    pub grid: Grid,
    pub directions: Vec<[f64; 3]>,
    pub times: Vec<f64>,
    /// `theta[node][time][point]`
    pub theta: Vec<Vec<Vec<f64>>>,
    /// First caustic time per node (`None` if no ray crossed the threshold).
    pub caustic_times: Vec<Option<f64>>,
    /// Smallest `|det J|` seen per node over the interval.
    pub min_determinants: Vec<f64>,
    /// End of the caustic-free part of `[0, times.last]`.
    pub validity: f64,
}

/// `tau_m` samples per node, order and output time.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    pub order: usize,
    pub grid: Grid,
    pub times: Vec<f64>,
    /// `tau[node][m][time][point]`
    pub tau: Vec<Vec<Vec<Vec<Complex64>>>>,
    /// `d_t tau_m` at `t = 0`: `[node][m][point]`
    pub initial_rates: Vec<Vec<Vec<Complex64>>>,
    /// `h(0, x, omega)` per node.
    pub initial_speed: Vec<Vec<f64>>,
    pub validity: f64,
}

impl PhaseTable {
    /// `Phi(t_k, x_p, xi) = x_p.xi + |xi| theta`, `xi` along `directions[node]`.
    pub fn phase(&self, node: usize, time: usize, point: usize, xi: &[f64; 3]) -> f64 {
        let x = self.grid.point(point);
        let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2] + r * self.theta[node][time][point]
    }
}

/// Spectral derivatives on the coarse grid, with a high-order exponential
/// filter to keep the nonlinear eikonal step from aliasing.
struct Spectral {
    grid: Grid,
    k: Vec<[f64; 3]>,
    filter: Vec<f64>,
}

impl Spectral {
    fn new(grid: Grid) -> Self {
        let k = grid.frequencies();
        let kmax = grid.nyquist();
        let filter = k
            .iter()
            .map(|v| {
                let r = v.iter().map(|c| c.abs()).fold(0.0, f64::max) / kmax;
                (-36.0 * r.powi(36)).exp()
            })
            .collect();
        Self { grid, k, filter }
    }

    /// Gradient and (optionally) packed Hessian of a field.
    fn derivatives(&self, f: &[Complex64], hessian: bool) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
        let (n, d) = (self.grid.points_per_axis(), self.grid.dim());
        let mut spec = fft::forward(f, n, d);
        spec.iter_mut().zip(&self.filter).for_each(|(s, w)| *s *= w);
        let grad = (0..d)
            .map(|a| {
                let s: Vec<Complex64> = spec.iter().zip(&self.k).map(|(c, k)| c * Complex64::new(0.0, k[a])).collect();
                fft::inverse(&s, n, d)
            })
            .collect();
        let mut hess = Vec::new();
        for a in (0..d).filter(|_| hessian) {
            for b in a..d {
                let s: Vec<Complex64> = spec.iter().zip(&self.k).map(|(c, k)| c * (-k[a] * k[b])).collect();
                hess.push(fft::inverse(&s, n, d));
            }
        }
        (grad, hess)
    }
}

/// `A`, `grad A` on the coarse grid.
struct MetricFields {
    a: Vec<[[f64; 3]; 3]>,
    da: Vec<[[[f64; 3]; 3]; 3]>,
}

impl MetricFields {
    fn new(metric: &MetricSnapshot, grid: &Grid) -> Result<Self> {
        let m = metric.resampled(grid.points_per_axis())?;
        let d = grid.dim();
        let a = (0..grid.len()).map(|p| m.matrix_at(p)).collect();
        let mut da = vec![[[[0.0; 3]; 3]; 3]; grid.len()];
        for i in 0..d {
            for j in i..d {
                let c = m.components()[sym_index(d, i, j)].gradient();
                for (k, g) in c.iter().enumerate() {
                    for (p, v) in g.samples().iter().enumerate() {
                        da[p][k][i][j] = v.re;
                        da[p][k][j][i] = v.re;
                    }
                }
            }
        }
        Ok(Self { a, da })
    }
}

/// State of the eikonal/transport system for one direction.
#[derive(Clone)]
struct Fields {
    theta: Vec<f64>,
    tau: Vec<Vec<Complex64>>,
}

impl Fields {
    fn axpy(&self, s: f64, o: &Fields) -> Fields {
        Fields {
            theta: self.theta.iter().zip(&o.theta).map(|(a, b)| a + s * b).collect(),
            tau: self
                .tau
                .iter()
                .zip(&o.tau)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * s).collect())
                .collect(),
        }
    }

    fn truncated(&self, m: usize) -> Fields {
        Fields { theta: self.theta.clone(), tau: self.tau[..m].to_vec() }
    }
}

struct System<'a> {
    ops: &'a Spectral,
    metric: &'a MetricFields,
    omega: [f64; 3],
    eps: f64,
}

/// Geometry of the phase at one instant.
struct Geometry {
    h: Vec<f64>,
    v: Vec<[f64; 3]>,
    c: Vec<f64>,
}

impl System<'_> {
    fn geometry(&self, theta: &[f64]) -> Geometry {
        let d = self.ops.grid.dim();
        let th: Vec<Complex64> = theta.iter().map(|&t| Complex64::new(t, 0.0)).collect();
        let (g, hs) = self.ops.derivatives(&th, true);
        let np = theta.len();
        let mut h = vec![0.0; np];
        let mut v = vec![[0.0; 3]; np];
        let mut c = vec![0.0; np];
        for p in 0..np {
            let a = &self.metric.a[p];
            let da = &self.metric.da[p];
            let mut s = [0.0; 3];
            for k in 0..d {
                s[k] = self.omega[k] + g[k][p].re;
            }
            let mut as_ = [0.0; 3];
            for i in 0..d {
                for j in 0..d {
                    as_[i] += a[i][j] * s[j];
                }
            }
            let hp = (0..d).map(|i| s[i] * as_[i]).sum::<f64>().sqrt();
            let hess = |i: usize, j: usize| hs[sym_index(d, i, j)][p].re;
            let mut grad_h = [0.0; 3];
            for k in 0..d {
                let mut sdas = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        sdas += s[i] * da[k][i][j] * s[j];
                    }
                }
                let cross: f64 = (0..d).map(|j| as_[j] * hess(k, j)).sum();
                grad_h[k] = (sdas + 2.0 * cross) / (2.0 * hp);
            }
            let mut a_hess = 0.0;
            for i in 0..d {
                for j in 0..d {
                    a_hess += a[i][j] * hess(i, j);
                }
            }
            let mut vp = [0.0; 3];
            for i in 0..d {
                vp[i] = as_[i] / hp;
            }
            let v_grad_h: f64 = (0..d).map(|k| vp[k] * grad_h[k]).sum();
            h[p] = hp;
            v[p] = vp;
            c[p] = (a_hess - v_grad_h) / (2.0 * hp);
        }
        Geometry { h, v, c }
    }

    /// Time derivative of `(theta, tau_0..tau_{m-1})` for `m = y.tau.len()`.
    fn rate(&self, y: &Fields) -> Fields {
        let geo = self.geometry(&y.theta);
        self.rate_with(y, &geo)
    }

    fn rate_with(&self, y: &Fields, geo: &Geometry) -> Fields {
        let d = self.ops.grid.dim();
        let np = y.theta.len();
        let theta_rate: Vec<f64> = geo.h.iter().map(|h| -h).collect();
        let mut out = Fields { theta: theta_rate, tau: Vec::with_capacity(y.tau.len()) };
        for m in 0..y.tau.len() {
            let (g, _) = self.ops.derivatives(&y.tau[m], false);
            let mut r: Vec<Complex64> = (0..np)
                .map(|p| {
                    let adv: Complex64 = (0..d).map(|k| g[k][p] * geo.v[p][k]).sum();
                    -adv - y.tau[m][p] * geo.c[p]
                })
                .collect();
            if m > 0 {
                let ptau = self.wave_operator(&y.truncated(m), &out, m - 1);
                for p in 0..np {
                    r[p] -= Complex64::new(0.0, 1.0) * ptau[p] / (2.0 * geo.h[p]);
                }
            }
            out.tau.push(r);
        }
        out
    }

    /// `P tau_j = d_t^2 tau_j - A : grad^2 tau_j`; `y` holds orders `0..=j`,
    /// `rate` their time derivatives.
    fn wave_operator(&self, y: &Fields, rate: &Fields, j: usize) -> Vec<Complex64> {
        let d = self.ops.grid.dim();
        let sub = y.truncated(j + 1);
        let sub_rate = rate.truncated(j + 1);
        let plus = self.rate(&sub.axpy(self.eps, &sub_rate));
        let minus = self.rate(&sub.axpy(-self.eps, &sub_rate));
        let (_, hs) = self.ops.derivatives(&y.tau[j], true);
        (0..y.theta.len())
            .map(|p| {
                let tt = (plus.tau[j][p] - minus.tau[j][p]) / (2.0 * self.eps);
                let mut ah = Complex64::new(0.0, 0.0);
                let a = &self.metric.a[p];
                for i in 0..d {
                    for k in 0..d {
                        ah += hs[sym_index(d, i, k)][p] * a[i][k];
                    }
                }
                tt - ah
            })
            .collect()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidArgument("output times must start at 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonIncreasingTimes);
    }
    Ok(())
}

fn unit(omega: &[f64; 3], d: usize) -> Result<[f64; 3]> {
    let r = omega[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 || omega[d..].iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidArgument(format!("bad direction {omega:?}")));
    }
    Ok(omega.map(|v| v / r))
}

/// Integrate `(theta, tau_0..tau_M)` for one direction; snapshots at `times`.
/// Returns the snapshots and the rates at `t = 0`.
#[allow(clippy::type_complexity)]
fn integrate_direction(
    ops: &Spectral,
    metric: &MetricFields,
    omega: [f64; 3],
    times: &[f64],
    order: Option<usize>,
    cfg: &EikonalConfig,
) -> (Vec<Fields>, Fields, Vec<f64>) {
    let np = ops.grid.len();
    let sys = System { ops, metric, omega, eps: cfg.difference_step };
    let ntau = order.map_or(0, |m| m + 1);
    let mut y = Fields {
        theta: vec![0.0; np],
        tau: (0..ntau)
            .map(|m| vec![Complex64::new(if m == 0 { 1.0 } else { 0.0 }, 0.0); np])
            .collect(),
    };
    let geo0 = sys.geometry(&y.theta);
    let rate0 = sys.rate_with(&y, &geo0);
    let mut snaps = vec![y.clone()];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / cfg.max_step).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for _ in 0..steps {
            let k1 = sys.rate(&y);
            let k2 = sys.rate(&y.axpy(0.5 * dt, &k1));
            let k3 = sys.rate(&y.axpy(0.5 * dt, &k2));
            let k4 = sys.rate(&y.axpy(dt, &k3));
            y = y.axpy(dt / 6.0, &k1).axpy(dt / 3.0, &k2).axpy(dt / 3.0, &k3).axpy(dt / 6.0, &k4);
        }
        snaps.push(y.clone());
    }
    (snaps, rate0, geo0.h)
}

/// Earliest caustic over rays launched along `omega` from a sub-lattice of
/// `grid`, and the smallest `|det J|` seen.
pub fn caustic_scan(
    metric: &MetricSnapshot,
    grid: &Grid,
    omega: &[f64; 3],
    t_end: f64,
    cfg: &EikonalConfig,
) -> Result<(Option<f64>, f64)> {
    let d = grid.dim();
    let stride = cfg.ray_stride.max(1);
    let steps = ((t_end * cfg.ray_steps_per_unit as f64).ceil() as usize).max(8);
    let mut first: Option<f64> = None;
    let mut min_det = f64::INFINITY;
    for p in 0..grid.len() {
        let idx = grid.multi_index(p);
        if idx[..d].iter().any(|i| i % stride != 0) {
            continue;
        }
        let ray = hamiltonian_flow(metric, &PhasePoint { x: grid.point(p), xi: *omega }, t_end, steps)?;
        let dets = ray.jacobian_determinants();
        if dets[1].abs() < cfg.caustic_threshold {
            return Err(Error::Caustic { time: ray.times[1], det: dets[1] });
        }
        min_det = dets.iter().map(|v| v.abs()).fold(min_det, f64::min);
        if let Some((t, _)) = ray.caustic_time(cfg.caustic_threshold) {
            first = Some(first.map_or(t, |f: f64| f.min(t)));
        }
    }
    Ok((first, min_det))
}

fn coarse_grid(metric: &MetricSnapshot, cfg: &EikonalConfig) -> Result<Grid> {
    let g = metric.grid();
    Grid::new(g.dim(), cfg.coarse_points, g.box_scale())
}

/// Phase by the Eulerian eikonal flow for each direction, with caustic
/// monitoring along the characteristics.
pub fn solve_eikonal(
    metric: &MetricSnapshot,
    directions: &[[f64; 3]],
    times: &[f64],
    cfg: &EikonalConfig,
) -> Result<PhaseTable> {
    check_times(times)?;
    let grid = coarse_grid(metric, cfg)?;
    let d = grid.dim();
    let dirs = directions.iter().map(|o| unit(o, d)).collect::<Result<Vec<_>>>()?;
    let ops = Spectral::new(grid);
    let mf = MetricFields::new(metric, &grid)?;
    let t_end = *times.last().unwrap();
    let per_node = dirs
        .par_iter()
        .map(|om| {
            let (snaps, _, _) = integrate_direction(&ops, &mf, *om, times, None, cfg);
            let scan = if t_end > 0.0 { caustic_scan(metric, &grid, om, t_end, cfg)? } else { (None, 1.0) };
            Ok((snaps.into_iter().map(|s| s.theta).collect::<Vec<_>>(), scan))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut theta = Vec::new();
    let mut caustic_times = Vec::new();
    let mut min_determinants = Vec::new();
    for (t, (c, m)) in per_node {
        theta.push(t);
        caustic_times.push(c);
        min_determinants.push(m);
    }
    let validity = caustic_times.iter().flatten().fold(t_end, |a, &b| a.min(b));
    Ok(PhaseTable { grid, directions: dirs, times: times.to_vec(), theta, caustic_times, min_determinants, validity })
}

/// Amplitudes `tau_0..tau_M` (`M <= 2`) along the phase of `phase`.
pub fn solve_transport(
    phase: &PhaseTable,
    metric: &MetricSnapshot,
    order: usize,
    cfg: &EikonalConfig,
) -> Result<SymbolTable> {
    if order > 2 {
        return Err(Error::InvalidArgument(format!("transport order {order} > 2")));
    }
    let grid = phase.grid;
    let ops = Spectral::new(grid);
    let mf = MetricFields::new(metric, &grid)?;
    let results: Vec<_> = phase
        .directions
        .par_iter()
        .enumerate()
        .map(|(node, om)| {
            let (snaps, rate0, h0) = integrate_direction(&ops, &mf, *om, &phase.times, Some(order), cfg);
            // the phase is re-integrated alongside; it must agree with the table
            debug_assert!(snaps
                .iter()
                .zip(&phase.theta[node])
                .all(|(s, t)| s.theta.iter().zip(t).all(|(a, b)| (a - b).abs() < 1e-12)));
            let tau: Vec<Vec<Vec<Complex64>>> =
                (0..=order).map(|m| snaps.iter().map(|s| s.tau[m].clone()).collect()).collect();
            (tau, rate0.tau, h0)
        })
        .collect();
    let mut tau = Vec::new();
    let mut initial_rates = Vec::new();
    let mut initial_speed = Vec::new();
    for (t, r, h) in results {
        tau.push(t);
        initial_rates.push(r);
        initial_speed.push(h);
    }
    Ok(SymbolTable { order, grid, times: phase.times.clone(), tau, initial_rates, initial_speed, validity: phase.validity })
}
