//! Integrating-factor RK4 for `u_tt = Δu + g^{ij} d_i d_j u`: the free wave
//! group is applied exactly in Fourier space and the metric term is stepped
//! by classical RK4 (Lawson form).

use super::{check_metric, metric_from_position, MetricLaw, MetricSeries, SchemeConfig};
use crate::eikonal::sym_index;
use crate::error::{Error, Result};
use crate::grid::fft;
use crate::grid::{Field, Grid, TimeSeries, WaveState};
use num_complex::Complex64;

/// Packed metric components sampled on the grid (real).
pub(crate) type MetricFields = Vec<Vec<f64>>;

pub(crate) struct Solve {
    pub states: TimeSeries<WaveState>,
    pub metric: Option<MetricSeries>,
}

pub(crate) struct Stepper {
    grid: Grid,
    dt: f64,
    steps: usize,
    cfl: f64,
    radius: Vec<f64>,
    /// `(cos, sin)` of `r dt/2` and `r dt`.
    half: Vec<(f64, f64)>,
    full: Vec<(f64, f64)>,
}

type Pair = (Vec<Complex64>, Vec<Complex64>);

impl Stepper {
    pub fn new(grid: Grid, dt: f64, steps: usize, cfl: f64) -> Self {
        let radius: Vec<f64> = grid.frequency_magnitudes();
        let half = radius.iter().map(|r| (0.5 * dt * r).sin_cos()).map(|(s, c)| (c, s)).collect();
        let full = radius.iter().map(|r| (dt * r).sin_cos()).map(|(s, c)| (c, s)).collect();
        Self { grid, dt, steps, cfl, radius, half, full }
    }

    /// Free propagator over `dt/2` or `dt`.
    fn free(&self, table: &[(f64, f64)], tau: f64, y: &Pair) -> Pair {
        let mut u = Vec::with_capacity(y.0.len());
        let mut v = Vec::with_capacity(y.0.len());
        for i in 0..y.0.len() {
            let r = self.radius[i];
            let (c, s) = table[i];
            if r == 0.0 {
                u.push(y.0[i] + y.1[i] * tau);
                v.push(y.1[i]);
            } else {
                u.push(y.0[i] * c + y.1[i] * (s / r));
                v.push(y.0[i] * (-r * s) + y.1[i] * c);
            }
        }
        (u, v)
    }

    /// Spectrum of `sum_ij g_ij d_i d_j u`.
    fn forcing(&self, u_hat: &[Complex64], g: &MetricFields) -> Vec<Complex64> {
        let dim = self.grid.dim();
        let n = self.grid.points_per_axis();
        let mut acc = vec![0.0; u_hat.len()];
        for i in 0..dim {
            for j in i..dim {
                let gij = &g[sym_index(dim, i, j)];
                if gij.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let w = if i == j { 1.0 } else { 2.0 };
                let spec: Vec<Complex64> = u_hat
                    .iter()
                    .enumerate()
                    .map(|(p, c)| {
                        let xi = self.grid.frequency(p);
                        c * (-xi[i] * xi[j])
                    })
                    .collect();
                let d = fft::inverse(&spec, n, dim);
                for p in 0..acc.len() {
                    acc[p] += w * gij[p] * d[p].re;
                }
            }
        }
        let samples: Vec<Complex64> = acc.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        fft::forward(&samples, n, dim)
    }

    fn rate(
        &self,
        t: f64,
        y: &Pair,
        provider: &mut dyn FnMut(f64, &[Complex64]) -> Result<Option<MetricFields>>,
        seen: Option<&mut Option<MetricFields>>,
    ) -> Result<Option<Vec<Complex64>>> {
        let g = provider(t, &y.0)?;
        let out = match &g {
            None => None,
            Some(g) => {
                check_metric(g, self.grid.dim(), self.dt, self.grid.spacing(), self.cfl)?;
                Some(self.forcing(&y.0, g))
            }
        };
        if let Some(slot) = seen {
            *slot = g;
        }
        Ok(out)
    }

    pub fn solve(
        &self,
        data: &WaveState,
        provider: &mut dyn FnMut(f64, &[Complex64]) -> Result<Option<MetricFields>>,
        record_metric: bool,
    ) -> Result<Solve> {
        if *data.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let grid = self.grid;
        let m = grid.dim() * (grid.dim() + 1) / 2;
        let to_fields = |g: &Option<MetricFields>| -> Vec<Field> {
            match g {
                None => vec![Field::zeros(grid); m],
                Some(g) => g
                    .iter()
                    .map(|c| Field::new(grid, c.iter().map(|x| Complex64::new(*x, 0.0)).collect()).expect("grid size"))
                    .collect(),
            }
        };
        let snapshot = |y: &Pair, t: f64| -> WaveState {
            WaveState {
                position: Field::from_spectrum(grid, y.0.clone()).expect("grid size").real_part(),
                velocity: Field::from_spectrum(grid, y.1.clone()).expect("grid size").real_part(),
                time: t,
            }
        };
        let mut y: Pair = (data.position.spectrum().to_vec(), data.velocity.spectrum().to_vec());
        let mut states = TimeSeries::empty();
        let mut metrics = TimeSeries::empty();
        states.push(0.0, snapshot(&y, 0.0))?;
        let h = self.dt;
        let add = |a: &Pair, k: &Option<Vec<Complex64>>, c: f64| -> Pair {
            match k {
                None => a.clone(),
                Some(k) => (a.0.clone(), a.1.iter().zip(k).map(|(x, z)| x + z * c).collect()),
            }
        };
        for step in 0..self.steps {
            let t = step as f64 * h;
            let mut seen = None;
            let k1 = self.rate(t, &y, provider, Some(&mut seen))?;
            if record_metric {
                metrics.push(t, to_fields(&seen))?;
            }
            let y2 = self.free(&self.half, 0.5 * h, &add(&y, &k1, 0.5 * h));
            let k2 = self.rate(t + 0.5 * h, &y2, provider, None)?;
            let ey_half = self.free(&self.half, 0.5 * h, &y);
            let y3 = add(&ey_half, &k2, 0.5 * h);
            let k3 = self.rate(t + 0.5 * h, &y3, provider, None)?;
            let ey = self.free(&self.full, h, &y);
            let y4 = match &k3 {
                None => ey.clone(),
                Some(k3) => {
                    let lifted = self.free(&self.half, 0.5 * h, &(vec![Complex64::new(0.0, 0.0); k3.len()], k3.clone()));
                    (
                        ey.0.iter().zip(&lifted.0).map(|(a, b)| a + b * h).collect(),
                        ey.1.iter().zip(&lifted.1).map(|(a, b)| a + b * h).collect(),
                    )
                }
            };
            let k4 = self.rate(t + h, &y4, provider, None)?;
            // y+ = E(h)y + h/6 [E(h)k1 + 2E(h/2)(k2 + k3) + k4]
            let mut next = ey;
            let zero = || vec![Complex64::new(0.0, 0.0); y.0.len()];
            if let Some(k1) = &k1 {
                let e = self.free(&self.full, h, &(zero(), k1.clone()));
                accumulate(&mut next, &e, h / 6.0);
            }
            let mut mid: Option<Vec<Complex64>> = None;
            for k in [&k2, &k3].into_iter().flatten() {
                mid = Some(match mid {
                    None => k.clone(),
                    Some(m) => m.iter().zip(k).map(|(a, b)| a + b).collect(),
                });
            }
            if let Some(mid) = mid {
                let e = self.free(&self.half, 0.5 * h, &(zero(), mid));
                accumulate(&mut next, &e, h / 3.0);
            }
            if let Some(k4) = &k4 {
                next.1.iter_mut().zip(k4).for_each(|(a, b)| *a += b * (h / 6.0));
            }
            y = next;
            states.push(t + h, snapshot(&y, t + h))?;
        }
        let metric = if record_metric {
            let t = self.steps as f64 * h;
            let g = provider(t, &y.0)?;
            metrics.push(t, to_fields(&g))?;
            Some(metrics)
        } else {
            None
        };
        Ok(Solve { states, metric })
    }
}

fn accumulate(target: &mut Pair, e: &Pair, c: f64) {
    target.0.iter_mut().zip(&e.0).for_each(|(a, b)| *a += b * c);
    target.1.iter_mut().zip(&e.1).for_each(|(a, b)| *a += b * c);
}

/// Direct solve of `u_tt - Δu - theta(t/T) g(u)·∇²u = 0` from the full data,
/// on a grid `refine` times finer in space with the step divided by `refine`.
pub fn direct_solve(data: &WaveState, law: &dyn MetricLaw, cfg: &SchemeConfig, refine: usize) -> Result<TimeSeries<WaveState>> {
    cfg.validate()?;
    if refine == 0 {
        return Err(Error::InvalidArgument("refinement factor must be positive".into()));
    }
    let (dt, steps) = cfg.time_grid()?;
    let fine = data.grid().with_points(data.grid().points_per_axis() * refine)?;
    let start = WaveState {
        position: data.position.zero_padded(fine.points_per_axis())?,
        velocity: data.velocity.zero_padded(fine.points_per_axis())?,
        time: 0.0,
    };
    let stepper = Stepper::new(fine, dt / refine as f64, steps * refine, cfg.cfl);
    let n = fine.points_per_axis();
    let mut provider = |t: f64, u_hat: &[Complex64]| -> Result<Option<MetricFields>> {
        let w = cfg.mollifier.value(t / cfg.horizon);
        if w == 0.0 {
            return Ok(None);
        }
        let u: Vec<f64> = fft::inverse(u_hat, n, fine.dim()).iter().map(|z| z.re).collect();
        Ok(Some(metric_from_position(&u, law, cfg.dim, w)))
    };
    Ok(stepper.solve(&start, &mut provider, false)?.states)
}
