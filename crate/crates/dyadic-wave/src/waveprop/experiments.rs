//! Ladder experiments on free waves. Wave packets localized near a carrier
//! frequency `xi_c` are stored demodulated: the grid holds `w` with
//! `u = e^{i x.xi_c} w`, so the grid only has to resolve the packet width.

use super::partition::{build_ring_partition_near, smooth_bump};
use super::{fidelity_window, norm, phase_rotate, support_radius, DecayFit, RingSpec};
use crate::dyadic::{smooth_tail, DyadicCutoff};
use crate::error::{Error, Result};
use crate::grid::{fft, lebesgue_norm, trapezoid, Field, Grid, WaveState};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `count` geometrically spaced times from `first` to `last` inclusive.
pub fn geometric_times(first: f64, last: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![last];
    }
    let r = (last / first).ln() / (count - 1) as f64;
    (0..count).map(|i| if i + 1 == count { last } else { first * (r * i as f64).exp() }).collect()
}

fn sup_of_synthesis(spec: &[Complex64], grid: &Grid) -> f64 {
    let s = fft::inverse(spec, grid.points_per_axis(), grid.dim());
    s.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- dispersive

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersiveConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_scale: f64,
    pub ring: RingSpec,
    /// Angular weight `exp(-a (1 - xi_1/|xi|))` concentrating the data near `+e_1`.
    pub cap_sharpness: f64,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub samples: usize,
    pub support_threshold: f64,
}

impl DispersiveConfig {
    pub fn for_dim(dim: usize) -> Self {
        let (n, l) = match dim {
            3 => (128, 20.0),
            _ => (256, 32.0),
        };
        Self {
            dim,
            points_per_axis: n,
            box_scale: l,
            ring: RingSpec { inner: 1.0, outer: 3.0, ball: None },
            cap_sharpness: 4.0,
            t_min: None,
            t_max: None,
            times: None,
            samples: 24,
            support_threshold: 1e-2,
        }
    }
}

impl Default for DispersiveConfig {
    fn default() -> Self {
        Self::for_dim(3)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersiveResult {
    pub fit: DecayFit,
    pub t_min: f64,
    pub t_max: f64,
    pub fidelity_limit: f64,
    pub support_radius: f64,
    /// `||u_0||_{L^1} + ||u_1||_{L^1}`.
    pub data_l1: f64,
    pub expected_slope: f64,
}

/// Ring-supported spectrum with a smooth radial profile and an angular cap.
pub fn ring_cap_spectrum(grid: &Grid, ring: &RingSpec, cap: f64) -> Vec<Complex64> {
    let mid = 0.5 * (ring.inner + ring.outer);
    let hw = 0.5 * (ring.outer - ring.inner);
    (0..grid.len())
        .map(|i| {
            let xi = grid.frequency(i);
            let r = norm(&xi);
            if r == 0.0 {
                return ZERO;
            }
            let a = smooth_bump((r - mid) / hw) * (-cap * (1.0 - xi[0] / r)).exp();
            Complex64::new(a, 0.0)
        })
        .collect()
}

/// `||u(t)||_{L^inf}` over a post-transient, pre-wrap window, fitted in log-log.
pub fn dispersive_experiment(cfg: &DispersiveConfig) -> Result<DispersiveResult> {
    let grid = Grid::new(cfg.dim, cfg.points_per_axis, cfg.box_scale)?;
    RingSpec::new(cfg.ring.inner, cfg.ring.outer)?;
    let spec = ring_cap_spectrum(&grid, &cfg.ring, cfg.cap_sharpness);
    if cfg.ring.outer > grid.nyquist() {
        return Err(Error::InvalidArgument(format!(
            "ring outer radius {} exceeds the grid band {}",
            cfg.ring.outer,
            grid.nyquist()
        )));
    }
    let u0 = Field::from_spectrum(grid, spec.clone())?;
    let rho = support_radius(&u0, &[0.0; 3], cfg.support_threshold);
    let fidelity = fidelity_window(&grid, rho);
    let times = match &cfg.times {
        Some(t) => t.clone(),
        None => {
            let t_min = cfg.t_min.unwrap_or(4.0 / cfg.ring.inner);
            let t_max = cfg.t_max.unwrap_or(fidelity);
            if !(t_max > t_min) {
                return Err(Error::FidelityWindow { t: t_min, t_max: fidelity });
            }
            geometric_times(t_min, t_max, cfg.samples)
        }
    };
    if let Some(&bad) = times.iter().find(|&&t| t > fidelity * (1.0 + 1e-12)) {
        return Err(Error::FidelityWindow { t: bad, t_max: fidelity });
    }
    let radii = grid.frequency_magnitudes();
    let sups: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let s: Vec<Complex64> = spec.iter().zip(&radii).map(|(c, r)| c * (t * r).cos()).collect();
            sup_of_synthesis(&s, &grid)
        })
        .collect();
    let data_l1 = lebesgue_norm(&u0, 1.0)?;
    let (t_min, t_max) = (times[0], *times.last().unwrap());
    let fit = DecayFit::fit(times, sups, None)?;
    Ok(DispersiveResult {
        fit,
        t_min,
        t_max,
        fidelity_limit: fidelity,
        support_radius: rho,
        data_l1,
        expected_slope: -0.5 * (cfg.dim as f64 - 1.0),
    })
}

// ------------------------------------------------------------ wave packets

/// Radial packet profile on `z = |eta|/h`: Gaussian core, smoothly cut off by `z = 1`.
pub fn packet_profile(z: f64) -> f64 {
    (-(3.0 * z).powi(2) / 2.0).exp() * smooth_tail((z - 0.7) / 0.3)
}

/// A single-branch packet `u = e^{i x.xi_c} w`, `w_hat(eta) = W(eta) e^{-i t omega(eta)}`,
/// `omega = |xi_c + eta|`, normalized to `||(grad u_0, u_1)||_{L^2} = 1`.
#[derive(Debug, Clone)]
pub struct Packet {
    pub grid: Grid,
    pub carrier: [f64; 3],
    pub h: f64,
    pub profile: Vec<Complex64>,
    pub omega: Vec<f64>,
    pub support_radius: f64,
    /// Time before the spreading packet meets its periodic image.
    pub fidelity_limit: f64,
}

impl Packet {
    pub fn new(dim: usize, n: usize, box_factor: f64, h: f64, carrier: [f64; 3], threshold: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidArgument(format!("h = {h} not in (0, 1]")));
        }
        if (n as f64) < 2.0 * box_factor {
            return Err(Error::InvalidArgument(format!(
                "h-ball unresolved: {n} points cannot hold radius h with box factor {box_factor}"
            )));
        }
        let grid = Grid::new(dim, n, box_factor / h)?;
        let mut profile = Vec::with_capacity(grid.len());
        let mut omega = Vec::with_capacity(grid.len());
        let mut energy = 0.0;
        for i in 0..grid.len() {
            let eta = grid.frequency(i);
            let xi = [carrier[0] + eta[0], carrier[1] + eta[1], carrier[2] + eta[2]];
            let w = norm(&xi);
            let a = packet_profile(norm(&eta) / h);
            energy += a * a * 2.0 * w * w;
            profile.push(Complex64::new(a, 0.0));
            omega.push(w);
        }
        let scale = 1.0 / (energy * grid.box_measure()).sqrt();
        profile.iter_mut().for_each(|c| *c *= scale);
        let w0 = Field::from_spectrum(grid, profile.clone())?;
        let rho = support_radius(&w0, &[0.0; 3], threshold);
        let fidelity_limit = (PI * grid.box_scale() - 2.0 * rho) * norm(&carrier) / h;
        Ok(Self { grid, carrier, h, profile, omega, support_radius: rho, fidelity_limit })
    }

    /// Demodulated spectrum at time `t`, times a symbol `m(xi_c + eta, omega)`.
    pub fn spectrum_at(&self, t: f64, m: impl Fn(&[f64; 3], f64) -> Complex64) -> Vec<Complex64> {
        let rot = phase_rotate(&self.profile, &self.omega, t);
        rot.iter()
            .enumerate()
            .map(|(i, c)| {
                if *c == ZERO {
                    return ZERO;
                }
                let eta = self.grid.frequency(i);
                let xi = [self.carrier[0] + eta[0], self.carrier[1] + eta[1], self.carrier[2] + eta[2]];
                c * m(&xi, self.omega[i])
            })
            .collect()
    }
}

// ---------------------------------------------------------------- strichartz

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrichartzConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    /// Box scale is `box_factor / h` for each ladder point.
    pub box_factor: f64,
    pub h_ladder: Vec<f64>,
    pub carrier: [f64; 3],
    pub ring: RingSpec,
    /// Fixed horizon `T`; each point integrates over `[0, min(T, fidelity limit)]`.
    pub horizon: f64,
    pub samples: usize,
    pub t_first: f64,
    pub support_threshold: f64,
}

impl Default for StrichartzConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            points_per_axis: 64,
            box_factor: 16.0,
            h_ladder: (1..=5).map(|j| 0.5f64.powi(j)).collect(),
            carrier: [1.0, 0.0, 0.0],
            ring: RingSpec { inner: 0.5, outer: 2.0, ball: None },
            horizon: 1e7,
            samples: 60,
            t_first: 1e-2,
            support_threshold: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrichartzPoint {
    pub h: f64,
    pub box_scale: f64,
    pub t_end: f64,
    pub fidelity_limit: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrichartzResult {
    pub fit: DecayFit,
    pub points: Vec<StrichartzPoint>,
    pub expected_slope: f64,
}

fn sample_times(t_first: f64, t_end: f64, samples: usize) -> Result<Vec<f64>> {
    if !(t_end > t_first) {
        return Err(Error::FidelityWindow { t: t_first, t_max: t_end });
    }
    let mut times = vec![0.0];
    times.extend(geometric_times(t_first, t_end, samples));
    Ok(times)
}

/// `||u||_{L^2_T L^inf}` of a packet, sampled on `[0] + geometric(t_first, t_end)`.
pub fn packet_strichartz_norm(p: &Packet, t_end: f64, t_first: f64, samples: usize) -> Result<f64> {
    let times = sample_times(t_first, t_end, samples)?;
    let sq: Vec<f64> = times
        .iter()
        .map(|&t| sup_of_synthesis(&phase_rotate(&p.profile, &p.omega, t), &p.grid).powi(2))
        .collect();
    Ok(trapezoid(&times, &sq).sqrt())
}

fn check_ball(ring: &RingSpec, dim: usize, carrier: &[f64; 3], h: f64) -> Result<()> {
    RingSpec::new(ring.inner, ring.outer)?.with_ball(h, *carrier)?;
    if carrier.iter().skip(dim).any(|c| *c != 0.0) {
        return Err(Error::InvalidArgument("carrier has components beyond the dimension".into()));
    }
    Ok(())
}

/// `||u||_{L^2_T L^inf}` versus `h` for data in `B(xi_c, h)`.
pub fn strichartz_h_experiment(cfg: &StrichartzConfig) -> Result<StrichartzResult> {
    for &h in &cfg.h_ladder {
        check_ball(&cfg.ring, cfg.dim, &cfg.carrier, h)?;
    }
    let points = cfg
        .h_ladder
        .par_iter()
        .map(|&h| {
            let p = Packet::new(cfg.dim, cfg.points_per_axis, cfg.box_factor, h, cfg.carrier, cfg.support_threshold)?;
            let t_end = cfg.horizon.min(p.fidelity_limit);
            let norm = packet_strichartz_norm(&p, t_end, cfg.t_first, cfg.samples)?;
            Ok(StrichartzPoint { h, box_scale: p.grid.box_scale(), t_end, fidelity_limit: p.fidelity_limit, norm })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = DecayFit::fit(points.iter().map(|p| p.h).collect(), points.iter().map(|p| p.norm).collect(), None)?;
    Ok(StrichartzResult { fit, points, expected_slope: 0.5 * (cfg.dim as f64 - 2.0) })
}

// --------------------------------------------------------- frequency scaling

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyScalingConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    /// Box scale is `box_factor * 2^{-q}`.
    pub box_factor: f64,
    pub q_ladder: Vec<i32>,
    pub horizon: f64,
    pub samples: usize,
    pub support_threshold: f64,
}

impl Default for FrequencyScalingConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            points_per_axis: 128,
            box_factor: 16.0,
            q_ladder: (2..=6).collect(),
            horizon: 0.5,
            samples: 32,
            support_threshold: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyScalingPoint {
    pub q: i32,
    pub box_scale: f64,
    pub fidelity_limit: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyScalingResult {
    /// Fit of `||du_q||_{L^2_T L^inf}` against `2^q`.
    pub fit: DecayFit,
    /// Raw slope minus the one derivative.
    pub reduced_slope: f64,
    pub derivative_exponent: f64,
    pub expected_reduced_slope: f64,
    pub points: Vec<FrequencyScalingPoint>,
}

/// Radial block data `psi(2^{-q}|D|)` with `||u_0||_{L^2} = 1`, `u_1 = 0`.
pub fn block_data(grid: &Grid, q: i32) -> Result<WaveState> {
    let cut = DyadicCutoff::default();
    let spec: Vec<Complex64> =
        grid.frequency_magnitudes().iter().map(|&r| Complex64::new(cut.homogeneous_block_multiplier(q, r), 0.0)).collect();
    let u0 = Field::from_spectrum(*grid, spec)?;
    let n = lebesgue_norm(&u0, 2.0)?;
    if n == 0.0 {
        return Err(Error::InvalidArgument(format!("block {q} holds no lattice frequency")));
    }
    WaveState::new(u0.scale_real(1.0 / n), Field::zeros(*grid), 0.0)
}

/// Spectra of `(d_t u, d_1 u, ..., d_d u)` at time `t` for free evolution of `state`.
pub fn derivative_spectra(state: &WaveState, t: f64) -> Vec<Vec<Complex64>> {
    let grid = *state.grid();
    let su = state.position.spectrum();
    let sv = state.velocity.spectrum();
    let dim = grid.dim();
    let mut out = vec![Vec::with_capacity(grid.len()); dim + 1];
    for i in 0..grid.len() {
        let xi = grid.frequency(i);
        let r = norm(&xi);
        let (u, ut) = if r == 0.0 {
            (su[i] + sv[i] * t, sv[i])
        } else {
            let (s, c) = (t * r).sin_cos();
            (su[i] * c + sv[i] * (s / r), su[i] * (-r * s) + sv[i] * c)
        };
        out[0].push(ut);
        for a in 0..dim {
            out[a + 1].push(u * Complex64::new(0.0, xi[a]));
        }
    }
    out
}

/// `||du||_{L^2_T L^inf}` with `|du| = max(|d_t u|, |d_j u|)` over the sample times.
pub fn derivative_strichartz_norm(state: &WaveState, times: &[f64]) -> f64 {
    let grid = *state.grid();
    let sq: Vec<f64> = times
        .iter()
        .map(|&t| {
            derivative_spectra(state, t).iter().map(|s| sup_of_synthesis(s, &grid)).fold(0.0, f64::max).powi(2)
        })
        .collect();
    trapezoid(times, &sq).sqrt()
}

/// Per-`q` run of the frequency-scaling ladder.
pub fn frequency_scaling_point(cfg: &FrequencyScalingConfig, q: i32, horizon: f64) -> Result<FrequencyScalingPoint> {
    let grid = Grid::new(cfg.dim, cfg.points_per_axis, cfg.box_factor * 2f64.powi(-q))?;
    let cut = DyadicCutoff::default();
    if cut.block_outer(q) > grid.nyquist() {
        return Err(Error::Unresolved { q, needed: cut.block_outer(q), nyquist: grid.nyquist() });
    }
    let data = block_data(&grid, q)?;
    let rho = support_radius(&data.position, &[0.0; 3], cfg.support_threshold);
    let fid = fidelity_window(&grid, rho);
    if horizon > fid {
        return Err(Error::FidelityWindow { t: horizon, t_max: fid });
    }
    let mut times = vec![0.0];
    times.extend(geometric_times(2f64.powi(-q) / 8.0, horizon, cfg.samples));
    Ok(FrequencyScalingPoint {
        q,
        box_scale: grid.box_scale(),
        fidelity_limit: fid,
        norm: derivative_strichartz_norm(&data, &times),
    })
}

/// `||du_q||_{L^2_T L^inf}` versus `q` for `L^2`-normalized block data.
pub fn frequency_scaling_experiment(cfg: &FrequencyScalingConfig) -> Result<FrequencyScalingResult> {
    let points =
        cfg.q_ladder.par_iter().map(|&q| frequency_scaling_point(cfg, q, cfg.horizon)).collect::<Result<Vec<_>>>()?;
    let fit = DecayFit::fit(
        points.iter().map(|p| 2f64.powi(p.q)).collect(),
        points.iter().map(|p| p.norm).collect(),
        None,
    )?;
    let reduced_slope = fit.slope - 1.0;
    Ok(FrequencyScalingResult {
        fit,
        reduced_slope,
        derivative_exponent: 1.0,
        expected_reduced_slope: 0.5 * (cfg.dim as f64 - 1.0),
        points,
    })
}

// -------------------------------------------------------------- interaction

/// A first-order derivative: time or one space axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Derivative {
    #[serde(rename = "t")]
    Time,
    #[serde(rename = "x1")]
    X1,
    #[serde(rename = "x2")]
    X2,
    #[serde(rename = "x3")]
    X3,
}

impl Derivative {
    /// Symbol on the branch `e^{i(x.xi - t omega)}`.
    pub fn symbol(self, xi: &[f64; 3], omega: f64) -> Complex64 {
        match self {
            Derivative::Time => Complex64::new(0.0, -omega),
            Derivative::X1 => Complex64::new(0.0, xi[0]),
            Derivative::X2 => Complex64::new(0.0, xi[1]),
            Derivative::X3 => Complex64::new(0.0, xi[2]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_factor: f64,
    pub h_ladder: Vec<f64>,
    pub carrier: [f64; 3],
    pub ring: RingSpec,
    pub horizon: f64,
    pub samples: usize,
    pub t_first: f64,
    /// `chi` is the ball bump rescaled to vanish outside `|zeta| = chi_radius`.
    pub chi_radius: f64,
    pub second: [Derivative; 2],
    pub first: Derivative,
    /// Put both waves near `+xi_c` (paired supports never meet).
    pub same_side: bool,
    /// Number of times in `[0, t_end/2]` at which the partition identity is checked.
    pub identity_checks: usize,
    pub support_threshold: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            points_per_axis: 64,
            box_factor: 16.0,
            h_ladder: (1..=5).map(|j| 0.5f64.powi(j)).collect(),
            carrier: [1.0, 0.0, 0.0],
            ring: RingSpec { inner: 0.5, outer: 2.0, ball: None },
            horizon: 1e7,
            samples: 60,
            t_first: 1e-2,
            chi_radius: 0.25,
            second: [Derivative::Time, Derivative::X1],
            first: Derivative::Time,
            same_side: false,
            identity_checks: 2,
            support_threshold: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionPoint {
    pub h: f64,
    pub t_end: f64,
    /// `||chi(h^{-1}D)(d^2 v_1 d v_2)||_{L^1_T L^inf}`.
    pub norm: f64,
    /// Same without the frequency cutoff.
    pub unlocalized_norm: f64,
    pub identity_error: f64,
    pub pieces: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionResult {
    pub fit: DecayFit,
    pub points: Vec<InteractionPoint>,
    pub max_identity_error: f64,
    pub expected_slope: f64,
}

/// `chi(zeta)`: the ball bump rescaled to support radius `radius`.
pub fn interaction_cutoff(r: f64, radius: f64) -> f64 {
    let cut = DyadicCutoff::default();
    cut.chi0(r * cut.support / radius)
}

struct InteractionFrame<'a> {
    packet: &'a Packet,
    cfg: &'a InteractionConfig,
    /// carrier of the product (0 for the reflected pair, `2 xi_c` otherwise)
    product_carrier: [f64; 3],
}

impl InteractionFrame<'_> {
    fn second_symbol(&self, xi: &[f64; 3], w: f64) -> Complex64 {
        self.cfg.second[0].symbol(xi, w) * self.cfg.second[1].symbol(xi, w)
    }

    /// `d^2 v_1` and `d v_2` on the lattice, each optionally pre-filtered.
    fn factors(
        &self,
        t: f64,
        filter1: &dyn Fn(&[f64; 3]) -> f64,
        filter2: &dyn Fn(&[f64; 3]) -> f64,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let g = &self.packet.grid;
        let (n, d) = (g.points_per_axis(), g.dim());
        let a = self.packet.spectrum_at(t, |xi, w| self.second_symbol(xi, w) * filter1(xi));
        let b = self.packet.spectrum_at(t, |xi, w| self.cfg.first.symbol(xi, w) * filter2(xi));
        let mut a = fft::inverse(&a, n, d);
        if !self.cfg.same_side {
            // v_1 = conj(v_2): derivatives commute with conjugation
            a.iter_mut().for_each(|z| *z = z.conj());
        }
        (a, fft::inverse(&b, n, d))
    }

    fn localize(&self, product: &[Complex64]) -> Vec<Complex64> {
        let g = &self.packet.grid;
        let (n, d) = (g.points_per_axis(), g.dim());
        let h = self.packet.h;
        let pc = self.product_carrier;
        let spec = fft::forward(product, n, d);
        let filtered: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let eta = g.frequency(i);
                let z = [pc[0] + eta[0], pc[1] + eta[1], pc[2] + eta[2]];
                c * interaction_cutoff(norm(&z) / h, self.cfg.chi_radius)
            })
            .collect();
        fft::inverse(&filtered, n, d)
    }

    fn product(&self, t: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let one = |_: &[f64; 3]| 1.0;
        let (a, b) = self.factors(t, &one, &one);
        let p: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        (self.localize(&p), p)
    }
}

fn sup(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn interaction_point(cfg: &InteractionConfig, h: f64) -> Result<InteractionPoint> {
    let packet = Packet::new(cfg.dim, cfg.points_per_axis, cfg.box_factor, h, cfg.carrier, cfg.support_threshold)?;
    if (cfg.points_per_axis as f64) < 4.0 * cfg.box_factor {
        return Err(Error::InvalidArgument("product band 2h exceeds the grid band".into()));
    }
    let c = cfg.carrier;
    let frame = InteractionFrame {
        packet: &packet,
        cfg,
        product_carrier: if cfg.same_side { [2.0 * c[0], 2.0 * c[1], 2.0 * c[2]] } else { [0.0; 3] },
    };
    let t_end = cfg.horizon.min(packet.fidelity_limit);
    let times = sample_times(cfg.t_first, t_end, cfg.samples)?;
    let mut loc = Vec::with_capacity(times.len());
    let mut unloc = Vec::with_capacity(times.len());
    for &t in &times {
        let (l, p) = frame.product(t);
        loc.push(sup(&l));
        unloc.push(sup(&p));
    }
    // partition identity: sum over pieces of chi(h^{-1}D)(d^2 phi~_nu(D) v_1 . d phi_nu(D) v_2)
    let partition = build_ring_partition_near(&cfg.ring, cfg.dim, h, &c, h)?;
    let relevant: Vec<usize> =
        (0..partition.len()).filter(|&m| norm(&sub(&partition.centers[m], &c)) < 2.0 * h).collect();
    let mut identity_error: f64 = 0.0;
    for k in 0..cfg.identity_checks {
        let t = if cfg.identity_checks > 1 { 0.5 * t_end * k as f64 / (cfg.identity_checks - 1) as f64 } else { 0.0 };
        let (direct, _) = frame.product(t);
        let mut acc = vec![ZERO; direct.len()];
        for &m in &relevant {
            let tilde = |xi: &[f64; 3]| {
                // v_1 lives at -xi; its spectral point is the reflection of the v_2 point
                if cfg.same_side {
                    partition.phi_tilde(m, xi)
                } else {
                    partition.phi_tilde(m, &[-xi[0], -xi[1], -xi[2]])
                }
            };
            let phi = |xi: &[f64; 3]| partition.phi(m, xi);
            let (a, b) = frame.factors(t, &tilde, &phi);
            for ((s, x), y) in acc.iter_mut().zip(&a).zip(&b) {
                *s += x * y;
            }
        }
        let summed = frame.localize(&acc);
        let num: f64 = summed.iter().zip(&direct).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = direct.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = {
            let (_, p) = frame.product(t);
            p.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt()
        };
        let err = if den > 1e-12 * scale { num / den } else { num / scale.max(f64::MIN_POSITIVE) };
        identity_error = identity_error.max(err);
    }
    Ok(InteractionPoint {
        h,
        t_end,
        norm: trapezoid(&times, &loc),
        unlocalized_norm: trapezoid(&times, &unloc),
        identity_error,
        pieces: relevant.len(),
    })
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `||chi(h^{-1}D)(d^2 v_1 d v_2)||_{L^1_T L^inf}` versus `h` for a reflected
/// packet pair `v_1 = conj(v_2)`, `v_2` supported in `B(xi_c, h)`.
pub fn interaction_experiment(cfg: &InteractionConfig) -> Result<InteractionResult> {
    for &h in &cfg.h_ladder {
        check_ball(&cfg.ring, cfg.dim, &cfg.carrier, h)?;
    }
    let points = cfg.h_ladder.par_iter().map(|&h| interaction_point(cfg, h)).collect::<Result<Vec<_>>>()?;
    let max_identity_error = points.iter().map(|p| p.identity_error).fold(0.0, f64::max);
    let fit = if points.iter().all(|p| p.norm > 0.0) {
        DecayFit::fit(points.iter().map(|p| p.h).collect(), points.iter().map(|p| p.norm).collect(), None)?
    } else {
        DecayFit {
            abscissa: points.iter().map(|p| p.h).collect(),
            ordinate: points.iter().map(|p| p.norm).collect(),
            slope: f64::NAN,
            intercept: f64::NAN,
            r2: f64::NAN,
            window: (0.0, 0.0),
            flagged: true,
        }
    };
    Ok(InteractionResult { fit, points, max_identity_error, expected_slope: cfg.dim as f64 - 2.0 })
}

/// Generic version on full (not demodulated) free waves:
/// `||chi(h^{-1}D)(d^2 v_1 d v_2)||_{L^1_T L^inf}`, products on a 2x padded grid.
pub fn localized_product_norm(
    v1: &WaveState,
    v2: &WaveState,
    second: [Derivative; 2],
    first: Derivative,
    h: f64,
    chi_radius: f64,
    times: &[f64],
) -> Result<f64> {
    v1.position.check_same_grid(&v2.position)?;
    let n2 = 2 * v1.grid().points_per_axis();
    let pad = |s: &WaveState| -> Result<WaveState> {
        WaveState::new(s.position.zero_padded(n2)?, s.velocity.zero_padded(n2)?, s.time)
    };
    let (p1, p2) = (pad(v1)?, pad(v2)?);
    let grid = *p1.grid();
    let comp = |ds: &[Vec<Complex64>], d: Derivative| -> Vec<Complex64> {
        match d {
            Derivative::Time => ds[0].clone(),
            Derivative::X1 => ds[1].clone(),
            Derivative::X2 => ds[2].clone(),
            Derivative::X3 => ds[3].clone(),
        }
    };
    let mut vals = Vec::with_capacity(times.len());
    for &t in times {
        let d1 = derivative_spectra(&p1, t);
        // second derivative: apply the outer derivative's symbol to the inner derivative
        let inner = comp(&d1, second[1]);
        let outer_spec: Vec<Complex64> = match second[0] {
            Derivative::Time => {
                // d_t of d_j u: use u_t and u_tt = Laplacian u
                let ut_state = derivative_first_time(&p1, t);
                match second[1] {
                    Derivative::Time => ut_state.1,
                    other => spatial(&grid, &ut_state.0, other),
                }
            }
            other => spatial(&grid, &inner, other),
        };
        let d2 = derivative_spectra(&p2, t);
        let b = comp(&d2, first);
        let a = fft::inverse(&outer_spec, n2, grid.dim());
        let b = fft::inverse(&b, n2, grid.dim());
        let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let pf = Field::new(grid, prod)?;
        let loc = pf.apply_radial(|r| interaction_cutoff(r / h, chi_radius));
        vals.push(loc.max_abs());
    }
    Ok(trapezoid(times, &vals))
}

/// Spectra of `(d_t u, d_t^2 u)` at time `t`.
fn derivative_first_time(state: &WaveState, t: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let grid = *state.grid();
    let su = state.position.spectrum();
    let sv = state.velocity.spectrum();
    let mut ut = Vec::with_capacity(grid.len());
    let mut utt = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let r = norm(&grid.frequency(i));
        if r == 0.0 {
            ut.push(sv[i]);
            utt.push(ZERO);
        } else {
            let (s, c) = (t * r).sin_cos();
            let u = su[i] * c + sv[i] * (s / r);
            ut.push(su[i] * (-r * s) + sv[i] * c);
            utt.push(u * (-r * r));
        }
    }
    (ut, utt)
}

fn spatial(grid: &Grid, spec: &[Complex64], d: Derivative) -> Vec<Complex64> {
    let axis = match d {
        Derivative::X1 => 0,
        Derivative::X2 => 1,
        Derivative::X3 => 2,
        Derivative::Time => unreachable!("handled by caller"),
    };
    spec.iter().enumerate().map(|(i, c)| c * Complex64::new(0.0, grid.frequency(i)[axis])).collect()
}
