//! Periodic lattices, complex fields with cached spectra, and Lebesgue / mixed
//! space-time norms.
//!
//! The physical box is `[0, 2 pi L)^d`, sampled at `x_j = 2 pi L j / n`. Spectral
//! coefficients are indexed by integer wavenumbers `k` in `(-n/2, n/2]^d` and
//! carry physical frequency `xi = k / L`. They are normalized so that a plane
//! wave `e^{i k.x/L}` has coefficient exactly 1.

pub mod fft;

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    box_scale: f64,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, box_scale: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if points_per_axis < 2 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis {points_per_axis} is not a power of two >= 2"
            )));
        }
        if !(box_scale > 0.0 && box_scale.is_finite()) {
            return Err(Error::InvalidGrid(format!("box scale {box_scale} must be positive")));
        }
        Ok(Self { dim, n: points_per_axis, box_scale })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn box_scale(&self) -> f64 {
        self.box_scale
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn period(&self) -> f64 {
        2.0 * PI * self.box_scale
    }

    pub fn spacing(&self) -> f64 {
        self.period() / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn box_measure(&self) -> f64 {
        self.period().powi(self.dim as i32)
    }

    /// Largest physical frequency representable along one axis.
    pub fn nyquist(&self) -> f64 {
        (self.n / 2) as f64 / self.box_scale
    }

    /// Same box, different resolution.
    pub fn with_points(&self, points_per_axis: usize) -> Result<Self> {
        Self::new(self.dim, points_per_axis, self.box_scale)
    }

    /// Signed wavenumber of a one-dimensional index, in `(-n/2, n/2]`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Inverse of [`Grid::wavenumber`]; `None` when outside the band.
    pub fn index_of_wavenumber(&self, k: i64) -> Option<usize> {
        let n = self.n as i64;
        if k > n / 2 || k <= -n / 2 {
            return None;
        }
        Some(k.rem_euclid(n) as usize)
    }

    /// Per-axis indices of a flat (row-major) index; unused axes are 0.
    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in (0..self.dim).rev() {
            out[a] = flat % self.n;
            flat /= self.n;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.dim).fold(0, |acc, &i| acc * self.n + i)
    }

    /// Flat spectral index of an integer wavevector, if it lies in the band.
    pub fn flat_index_of_wavevector(&self, k: &[i64]) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..self.dim {
            idx[a] = self.index_of_wavenumber(k[a])?;
        }
        Some(self.flat_index(&idx[..self.dim]))
    }

    pub fn wavevector(&self, flat: usize) -> [i64; 3] {
        let m = self.multi_index(flat);
        let mut k = [0i64; 3];
        for a in 0..self.dim {
            k[a] = self.wavenumber(m[a]);
        }
        k
    }

    /// Physical frequency `xi = k / L` of a flat spectral index.
    pub fn frequency(&self, flat: usize) -> [f64; 3] {
        let k = self.wavevector(flat);
        let mut xi = [0.0; 3];
        for a in 0..self.dim {
            xi[a] = k[a] as f64 / self.box_scale;
        }
        xi
    }

    /// Physical coordinates of a flat lattice index.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let m = self.multi_index(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = m[a] as f64 * h;
        }
        x
    }

    pub fn frequencies(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.frequency(i)).collect()
    }

    pub fn frequency_magnitudes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| norm3(&self.frequency(i))).collect()
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Complex scalar field on a [`Grid`] with a lazily cached spectrum.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    samples: Vec<Complex64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Field {
    pub fn new(grid: Grid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        Ok(Self { grid, samples, spectrum: OnceLock::new() })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, samples: vec![ZERO; grid.len()], spectrum: OnceLock::new() }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64; 3]) -> Complex64) -> Self {
        let samples = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, samples, spectrum: OnceLock::new() }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// Field synthesized from spectral coefficients (cache populated).
    pub fn from_spectrum(grid: Grid, spectrum: Vec<Complex64>) -> Result<Self> {
        if spectrum.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                spectrum.len()
            )));
        }
        let samples = fft::inverse(&spectrum, grid.n, grid.dim);
        let cache = OnceLock::new();
        let _ = cache.set(spectrum);
        Ok(Self { grid, samples, spectrum: cache })
    }

    /// Plane wave `e^{i k.x / L}` for an integer wavevector `k`.
    pub fn plane_wave(grid: Grid, k: &[i64]) -> Self {
        let l = grid.box_scale;
        let mut kk = [0.0; 3];
        for a in 0..grid.dim {
            kk[a] = k[a] as f64 / l;
        }
        Self::from_fn(grid, |x| Complex64::from_polar(1.0, kk[0] * x[0] + kk[1] * x[1] + kk[2] * x[2]))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Spectral coefficients, computed on first access.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| fft::forward(&self.samples, self.grid.n, self.grid.dim))
    }

    pub fn has_spectrum(&self) -> bool {
        self.spectrum.get().is_some()
    }

    /// Returns the same field with its spectrum populated.
    pub fn transform(self) -> Self {
        self.spectrum();
        self
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Fourier multiplier `m(xi)` applied spectrally.
    pub fn apply_multiplier(&self, m: impl Fn(&[f64; 3]) -> Complex64) -> Field {
        let spec = self.spectrum();
        let out = spec
            .iter()
            .enumerate()
            .map(|(i, c)| if *c == ZERO { ZERO } else { c * m(&self.grid.frequency(i)) })
            .collect();
        Field::from_spectrum(self.grid, out).expect("same grid")
    }

    /// Real radial multiplier `m(|xi|)`.
    pub fn apply_radial(&self, m: impl Fn(f64) -> f64) -> Field {
        self.apply_multiplier(|xi| Complex64::new(m(norm3(xi)), 0.0))
    }

    /// Spectral derivative `d/dx_axis` (multiplication by `i xi_axis`).
    pub fn derivative(&self, axis: usize) -> Field {
        self.apply_multiplier(|xi| Complex64::new(0.0, xi[axis]))
    }

    pub fn gradient(&self) -> Vec<Field> {
        (0..self.grid.dim).map(|a| self.derivative(a)).collect()
    }

    pub fn laplacian(&self) -> Field {
        self.apply_multiplier(|xi| Complex64::new(-(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]), 0.0))
    }

    fn zip_with(&self, other: &Field, f: impl Fn(Complex64, Complex64) -> Complex64) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| f(*a, *b)).collect();
        Field { grid: self.grid, samples, spectrum: OnceLock::new() }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product on the lattice (aliasing is the caller's concern).
    pub fn mul(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Complex64) -> Field {
        let samples = self.samples.iter().map(|a| a * s).collect();
        let out = Field { grid: self.grid, samples, spectrum: OnceLock::new() };
        if let Some(spec) = self.spectrum.get() {
            let _ = out.spectrum.set(spec.iter().map(|c| c * s).collect());
        }
        out
    }

    pub fn scale_real(&self, s: f64) -> Field {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn conj(&self) -> Field {
        let samples = self.samples.iter().map(|a| a.conj()).collect();
        Field { grid: self.grid, samples, spectrum: OnceLock::new() }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        let samples = self.samples.iter().map(|a| f(*a)).collect();
        Field { grid: self.grid, samples, spectrum: OnceLock::new() }
    }

    pub fn real_part(&self) -> Field {
        self.map(|a| Complex64::new(a.re, 0.0))
    }

    /// Zero-mode coefficient (the spatial average).
    pub fn mean(&self) -> Complex64 {
        self.spectrum()[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Largest `|xi|` carrying a coefficient above `tol * max|c|`.
    pub fn spectral_reach(&self, tol: f64) -> f64 {
        let spec = self.spectrum();
        let peak = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        spec.iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > tol * peak)
            .map(|(i, _)| norm3(&self.grid.frequency(i)))
            .fold(0.0, f64::max)
    }

    /// Copy on a finer grid with the same box (spectral zero padding).
    pub fn zero_padded(&self, points_per_axis: usize) -> Result<Field> {
        self.resampled(points_per_axis)
    }

    /// Spectral resampling onto another resolution of the same box: padding
    /// with zeros when finer, discarding out-of-band modes when coarser.
    pub fn resampled(&self, points_per_axis: usize) -> Result<Field> {
        let target = self.grid.with_points(points_per_axis)?;
        let mut out = vec![ZERO; target.len()];
        for (i, c) in self.spectrum().iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            if let Some(j) = target.flat_index_of_wavevector(&self.grid.wavevector(i)) {
                out[j] = *c;
            }
        }
        Field::from_spectrum(target, out)
    }

    /// `||a - b||_2 / ||b||_2` on the lattice (0/0 reads as 0).
    pub fn relative_distance(&self, reference: &Field) -> f64 {
        let num: f64 = self.samples.iter().zip(&reference.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = reference.samples.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// L2 norm from the spectrum: `(2 pi L)^{d/2} (sum |c_k|^2)^{1/2}`.
    pub fn spectral_l2_norm(&self) -> f64 {
        let s: f64 = self.spectrum().iter().map(|c| c.norm_sqr()).sum();
        (self.grid.box_measure() * s).sqrt()
    }

    /// Random field with coefficients supported in `|xi| <= max_freq`,
    /// Gaussian amplitudes, zero mean when `zero_mean`.
    pub fn random_band_limited(grid: Grid, max_freq: f64, zero_mean: bool, rng: &mut impl Rng) -> Field {
        let spec = (0..grid.len())
            .map(|i| {
                let r = norm3(&grid.frequency(i));
                let c = Complex64::new(gaussian(rng), gaussian(rng));
                if r > max_freq || (zero_mean && i == 0) {
                    ZERO
                } else {
                    c
                }
            })
            .collect();
        Field::from_spectrum(grid, spec).expect("sizes agree")
    }
}

/// Standard normal sample (Box-Muller).
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// `(u, d_t u)` at a time, on one grid.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub position: Field,
    pub velocity: Field,
    pub time: f64,
}

impl WaveState {
    pub fn new(position: Field, velocity: Field, time: f64) -> Result<Self> {
        position.check_same_grid(&velocity)?;
        Ok(Self { position, velocity, time })
    }

    pub fn grid(&self) -> &Grid {
        self.position.grid()
    }

    /// Cauchy data `gamma = (grad u, d_t u)` as a list of fields.
    pub fn gamma(&self) -> Vec<Field> {
        let mut out = self.position.gradient();
        out.push(self.velocity.clone());
        out
    }

    /// `||grad u||^2 + ||d_t u||^2`.
    pub fn energy(&self) -> f64 {
        let spec = self.position.spectrum();
        let grid = self.grid();
        let grad: f64 = spec
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let xi = grid.frequency(i);
                c.norm_sqr() * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])
            })
            .sum();
        let vel: f64 = self.velocity.spectrum().iter().map(|c| c.norm_sqr()).sum();
        grid.box_measure() * (grad + vel)
    }

    /// `||gamma||_{L^2}`.
    pub fn gamma_norm(&self) -> f64 {
        self.energy().sqrt()
    }
}

/// Snapshots at strictly increasing times.
#[derive(Debug, Clone)]
pub struct TimeSeries<S> {
    times: Vec<f64>,
    states: Vec<S>,
}

impl<S> TimeSeries<S> {
    pub fn new(times: Vec<f64>, states: Vec<S>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidArgument(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonIncreasingTimes);
        }
        Ok(Self { times, states })
    }

    pub fn empty() -> Self {
        Self { times: Vec::new(), states: Vec::new() }
    }

    pub fn push(&mut self, t: f64, s: S) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::NonIncreasingTimes);
            }
        }
        self.times.push(t);
        self.states.push(s);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &S)> {
        self.times.iter().copied().zip(self.states.iter())
    }

    pub fn map<R>(&self, f: impl Fn(f64, &S) -> R) -> TimeSeries<R> {
        TimeSeries { times: self.times.clone(), states: self.iter().map(|(t, s)| f(t, s)).collect() }
    }

    /// Snapshots with `t <= t_max`.
    pub fn truncated(&self, t_max: f64) -> TimeSeries<S>
    where
        S: Clone,
    {
        let keep = self.times.iter().take_while(|&&t| t <= t_max).count();
        TimeSeries { times: self.times[..keep].to_vec(), states: self.states[..keep].to_vec() }
    }
}

/// `(sum |u|^r dx)^{1/r}` by lattice quadrature; `r = inf` is the lattice max.
pub fn lebesgue_norm(field: &Field, r: f64) -> Result<f64> {
    if r.is_infinite() && r > 0.0 {
        return Ok(field.max_abs());
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("Lebesgue exponent {r} < 1")));
    }
    let dv = field.grid().cell_volume();
    let s: f64 = if r == 2.0 {
        field.samples().iter().map(|a| a.norm_sqr()).sum()
    } else if r == 1.0 {
        field.samples().iter().map(|a| a.norm()).sum()
    } else {
        field.samples().iter().map(|a| a.norm().powf(r)).sum()
    };
    Ok((s * dv).powf(1.0 / r))
}

/// Trapezoidal `L^p` norm of sampled values over the sample times;
/// `p = inf` is the max.
pub fn time_norm(times: &[f64], values: &[f64], p: f64) -> Result<f64> {
    if times.is_empty() || times.len() != values.len() {
        return Err(Error::EmptySeries);
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("time exponent {p} < 1")));
    }
    let f: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    Ok(trapezoid(times, &f).powf(1.0 / p))
}

/// Trapezoid rule on arbitrary (sorted) abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// `L^p_T L^r` norm of a field series: spatial norm per snapshot, then time norm.
pub fn mixed_norm(series: &TimeSeries<Field>, p: f64, r: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let spatial = series.states().iter().map(|f| lebesgue_norm(f, r)).collect::<Result<Vec<_>>>()?;
    time_norm(series.times(), &spatial, p)
}
