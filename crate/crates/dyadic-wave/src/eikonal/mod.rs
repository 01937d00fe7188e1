//! Geometric optics for `d_t^2 u - (I + G(x)) : grad^2 u = 0` with a static,
//! band-limited perturbation `G`: Hamiltonian rays, the eikonal phase,
//! transport amplitudes, the assembled parametrix and its residual against a
//! spectral reference solve.

mod parametrix;
mod phase;
mod rays;

pub use parametrix::*;
pub use phase::*;
pub use rays::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Required gap between the smallest eigenvalue of `I + G` and zero.
pub const POSITIVITY_MARGIN: f64 = 0.1;

/// Index of the `(i, j)` entry in packed upper-triangular storage.
pub fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * dim - a * (a + 1) / 2 + b
}

/// Smallest eigenvalue of a symmetric `d x d` matrix (d <= 3).
pub fn min_eigenvalue(m: &[[f64; 3]; 3], dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => {
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt()
        }
        _ => {
            // trigonometric solution of the characteristic cubic
            let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
            let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
            if p1 == 0.0 {
                return m[0][0].min(m[1][1]).min(m[2][2]);
            }
            let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let mut b = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
                }
            }
            let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
                + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
            let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
            q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
        }
    }
}

/// One Fourier mode of a metric component: `c e^{i x.xi}`.
#[derive(Debug, Clone, Copy)]
struct Mode {
    xi: [f64; 3],
    c: Complex64,
}

/// `A(x) = I + G(x)` and its first two derivatives at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricJet {
    pub a: [[f64; 3]; 3],
    /// `da[k][i][j] = d_k A_ij`
    pub da: [[[f64; 3]; 3]; 3],
    /// `dda[k][l][i][j] = d_k d_l A_ij`
    pub dda: [[[[f64; 3]; 3]; 3]; 3],
}

/// Static symmetric perturbation `G` sampled on a grid, with `I + G` positive.
#[derive(Debug, Clone)]
pub struct MetricSnapshot {
    grid: Grid,
    /// Packed upper-triangular components, real-valued.
    components: Vec<Field>,
    modes: Vec<Vec<Mode>>,
    min_eig: f64,
}

impl MetricSnapshot {
    /// `components` in packed order `(0,0), (0,1), ..., (1,1), ...`.
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidArgument("metric needs components".into()))?.clone();
        let grid = *first.grid();
        let d = grid.dim();
        if components.len() != d * (d + 1) / 2 {
            return Err(Error::InvalidArgument(format!(
                "dimension {d} needs {} metric components, got {}",
                d * (d + 1) / 2,
                components.len()
            )));
        }
        let mut comps = Vec::with_capacity(components.len());
        for c in components {
            first.check_same_grid(&c)?;
            let peak = c.max_abs().max(1e-300);
            if c.samples().iter().any(|z| z.im.abs() > 1e-12 * peak.max(1.0)) {
                return Err(Error::InvalidArgument("metric components must be real".into()));
            }
            comps.push(c.real_part());
        }
        let modes = comps
            .iter()
            .map(|c| {
                let spec = c.spectrum();
                let peak = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
                (0..grid.len())
                    .filter(|&i| spec[i].norm() > 1e-15 * peak.max(1e-300) && spec[i].norm() > 0.0)
                    .map(|i| Mode { xi: grid.frequency(i), c: spec[i] })
                    .collect()
            })
            .collect();
        let mut snap = Self { grid, components: comps, modes, min_eig: f64::INFINITY };
        let mut min_eig = f64::INFINITY;
        for i in 0..grid.len() {
            min_eig = min_eig.min(min_eigenvalue(&snap.matrix_at_index(i), d));
        }
        snap.min_eig = min_eig;
        if min_eig < POSITIVITY_MARGIN {
            return Err(Error::Positivity { min_eig, margin: POSITIVITY_MARGIN });
        }
        Ok(snap)
    }

    /// `G = 0`.
    pub fn flat(grid: Grid) -> Self {
        let d = grid.dim();
        Self::new(vec![Field::zeros(grid); d * (d + 1) / 2]).expect("identity is positive")
    }

    /// Build from a pointwise closure returning the full matrix `G(x)`.
    pub fn from_fn(grid: Grid, g: impl Fn(&[f64; 3]) -> [[f64; 3]; 3]) -> Result<Self> {
        let d = grid.dim();
        let pts = grid.points();
        let vals: Vec<[[f64; 3]; 3]> = pts.iter().map(&g).collect();
        let mut comps = Vec::new();
        for i in 0..d {
            for j in i..d {
                let s = vals.iter().map(|m| Complex64::new(0.5 * (m[i][j] + m[j][i]), 0.0)).collect();
                comps.push(Field::new(grid, s)?);
            }
        }
        Self::new(comps)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn component(&self, i: usize, j: usize) -> &Field {
        &self.components[sym_index(self.dim(), i, j)]
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    /// Smallest eigenvalue of `I + G` over the lattice.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn is_flat(&self) -> bool {
        self.modes.iter().all(|m| m.is_empty())
    }

    /// Largest eigenvalue bound of `I + G` (Gershgorin over the lattice).
    pub fn max_speed_squared(&self) -> f64 {
        let d = self.dim();
        (0..self.grid.len())
            .map(|p| {
                let m = self.matrix_at_index(p);
                (0..d).map(|i| (0..d).map(|j| m[i][j].abs()).sum::<f64>()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn matrix_at_index(&self, p: usize) -> [[f64; 3]; 3] {
        let d = self.dim();
        let mut m = [[0.0; 3]; 3];
        for i in 0..d {
            m[i][i] = 1.0;
            for j in i..d {
                let v = self.component(i, j).samples()[p].re;
                m[i][j] += v;
                if i != j {
                    m[j][i] += v;
                }
            }
        }
        m
    }

    /// `I + G` at lattice point `p`.
    pub fn matrix_at(&self, p: usize) -> [[f64; 3]; 3] {
        self.matrix_at_index(p)
    }

    /// Exact band-limited evaluation of `A` and its derivatives at any point.
    pub fn jet(&self, x: &[f64; 3]) -> MetricJet {
        let d = self.dim();
        let mut jet = MetricJet::default();
        for i in 0..d {
            jet.a[i][i] = 1.0;
        }
        for i in 0..d {
            for j in i..d {
                let (mut v, mut g, mut hh) = (0.0, [0.0; 3], [[0.0; 3]; 3]);
                for m in &self.modes[sym_index(d, i, j)] {
                    let ph = m.xi[0] * x[0] + m.xi[1] * x[1] + m.xi[2] * x[2];
                    let e = m.c * Complex64::from_polar(1.0, ph);
                    v += e.re;
                    // d_k e = i xi_k e
                    let ie = Complex64::new(-e.im, e.re);
                    for k in 0..d {
                        g[k] += m.xi[k] * ie.re;
                        for l in 0..d {
                            hh[k][l] -= m.xi[k] * m.xi[l] * e.re;
                        }
                    }
                }
                for (a, b) in [(i, j), (j, i)] {
                    jet.a[a][b] += v;
                    for k in 0..d {
                        jet.da[k][a][b] = g[k];
                        for l in 0..d {
                            jet.dda[k][l][a][b] = hh[k][l];
                        }
                    }
                    if i == j {
                        break;
                    }
                }
            }
        }
        jet
    }

    /// Same metric on a grid with `n` points per axis (exact for band-limited `G`).
    pub fn resampled(&self, n: usize) -> Result<Self> {
        let comps = self.components.iter().map(|c| c.resampled(n).map(|f| f.real_part())).collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    /// Apply a spectral multiplier to every component (e.g. a low-pass cut).
    pub fn filtered(&self, m: impl Fn(f64) -> f64 + Copy) -> Result<Self> {
        Self::new(self.components.iter().map(|c| c.apply_radial(m).real_part()).collect())
    }
}

/// Named metrics used by the residual ladder and the lens studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardMetric {
    Flat,
    /// Conformal perturbation `a(x) I`.
    Conformal,
    /// Off-diagonal coupling plus a diagonal ripple.
    Shear,
    /// Diagonal, direction-dependent speeds.
    Anisotropic,
}

impl StandardMetric {
    pub const SUITE: [StandardMetric; 3] = [StandardMetric::Conformal, StandardMetric::Shear, StandardMetric::Anisotropic];

    pub fn name(self) -> &'static str {
        match self {
            StandardMetric::Flat => "flat",
            StandardMetric::Conformal => "conformal",
            StandardMetric::Shear => "shear",
            StandardMetric::Anisotropic => "anisotropic",
        }
    }

    /// Build on `grid`; `amplitude` scales the perturbation. Wavenumber 1 in
    /// units of the box scale, so pick `box_scale = 1`.
    pub fn build(self, grid: Grid, amplitude: f64) -> Result<MetricSnapshot> {
        let d = grid.dim();
        let l = grid.box_scale();
        let s = move |x: &[f64; 3], k: usize| x[k.min(d - 1)] / l;
        MetricSnapshot::from_fn(grid, move |x| {
            let mut g = [[0.0; 3]; 3];
            let (x1, x2) = (s(x, 0), if d > 1 { s(x, 1) } else { 0.0 });
            match self {
                StandardMetric::Flat => {}
                StandardMetric::Conformal => {
                    let a = amplitude * x1.sin() * x2.cos();
                    for (i, row) in g.iter_mut().enumerate().take(d) {
                        row[i] = a;
                    }
                }
                StandardMetric::Shear => {
                    g[0][0] = 0.6 * amplitude * x2.sin();
                    if d > 1 {
                        g[0][1] = 0.6 * amplitude * (x1 + x2).cos();
                        g[1][0] = g[0][1];
                    }
                }
                StandardMetric::Anisotropic => {
                    g[0][0] = amplitude * x1.cos();
                    if d > 1 {
                        g[1][1] = -0.7 * amplitude * (x1 - x2).sin();
                    }
                }
            }
            g
        })
    }
}

/// Focusing lens: `A = (1 - s b(x)) I` with `b = prod_k (1 + cos x_k)/2`, slow at the origin.
pub fn lens_metric(grid: Grid, strength: f64) -> Result<MetricSnapshot> {
    let d = grid.dim();
    let l = grid.box_scale();
    MetricSnapshot::from_fn(grid, move |x| {
        let b: f64 = (0..d).map(|k| 0.5 * (1.0 + (x[k] / l).cos())).product();
        let mut g = [[0.0; 3]; 3];
        for (i, row) in g.iter_mut().enumerate().take(d) {
            row[i] = -strength * b;
        }
        g
    })
}

#[cfg(test)]
mod tests;
