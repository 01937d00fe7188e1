//! Phase-space localization: the `(K, h)` metric on `T*R^d`, quantization of
//! separable symbols, microlocalization seminorms over a declared symbol
//! family, product interaction of localized pieces, and transport of
//! wave-packet concentration by the Hamiltonian flow.

mod interaction;
mod propagation;

pub use interaction::*;
pub use propagation::*;

pub use crate::eikonal::PhasePoint;

use crate::dyadic::DyadicCutoff;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::waveprop::smooth_bump;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default separation factor `C_0` and ball radius `r`.
pub const DEFAULT_C0: f64 = 2.0;
pub const DEFAULT_RADIUS: f64 = 1.0;
/// Symbols count as vanishing below this fraction of their peak.
pub const SUPPORT_TOLERANCE: f64 = 1e-10;
/// Certification margin on the declared radius.
pub const SUPPORT_MARGIN: f64 = 1.05;

/// `g = dy^2/K^2 + d eta^2/h^2` with `lambda = K h >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GMetric {
    pub k: f64,
    pub h: f64,
}

impl GMetric {
    pub fn new(k: f64, h: f64) -> Result<Self> {
        if !(k > 0.0 && h > 0.0) || k * h < 1.0 - 1e-12 {
            return Err(Error::InvalidArgument(format!("phase-space metric needs K, h > 0 and K h >= 1 (K = {k}, h = {h})")));
        }
        Ok(Self { k, h })
    }

    pub fn lambda(&self) -> f64 {
        self.k * self.h
    }

    /// `g(X - Y)`, with spatial differences taken modulo `period` when given.
    pub fn distance_sq(&self, a: &PhasePoint, b: &PhasePoint, dim: usize, period: Option<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..dim {
            let dy = wrap(a.x[i] - b.x[i], period);
            let de = a.xi[i] - b.xi[i];
            s += dy * dy / (self.k * self.k) + de * de / (self.h * self.h);
        }
        s
    }
}

fn wrap(d: f64, period: Option<f64>) -> f64 {
    match period {
        Some(p) => d - p * (d / p).round(),
        None => d,
    }
}

/// Radial profile of a symbol factor, as a function of `|z| / radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `exp(1 - 1/(1 - t^2))` on `t < 1`.
    Bump,
    /// Centered cardinal B-spline of the given order (`C^{order-2}`), peak 1, support `t < 1`.
    Spline(u32),
    /// The dyadic block multiplier `Delta_q` (frequency factors only, radius ignored).
    Block(i32),
    /// Identically 1.
    Constant,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `B_m(x)`, the centered cardinal B-spline of order `m` (support `[-m/2, m/2]`).
fn cardinal_spline(m: u32, x: f64) -> f64 {
    let half = m as f64 / 2.0;
    if x.abs() >= half {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 0..=m {
        let t = x + half - k as f64;
        if t > 0.0 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * binomial(m, k) * t.powi(m as i32 - 1);
        }
    }
    s / factorial(m - 1)
}

impl Profile {
    pub fn value(self, t: f64) -> f64 {
        match self {
            Profile::Bump => smooth_bump(t),
            Profile::Spline(m) => {
                let half = m as f64 / 2.0;
                cardinal_spline(m, t * half) / cardinal_spline(m, 0.0)
            }
            Profile::Block(q) => DyadicCutoff::default().block_multiplier(q, t),
            Profile::Constant => 1.0,
        }
    }

    fn is_compact(self) -> bool {
        matches!(self, Profile::Bump | Profile::Spline(_))
    }
}

/// `profile(|z - center| / radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub profile: Profile,
    pub center: [f64; 3],
    pub radius: f64,
}

impl Atom {
    pub fn constant() -> Self {
        Self { profile: Profile::Constant, center: [0.0; 3], radius: 1.0 }
    }

    pub fn block(q: i32) -> Self {
        Self { profile: Profile::Block(q), center: [0.0; 3], radius: 1.0 }
    }

    fn eval(&self, z: &[f64; 3], dim: usize, period: Option<f64>) -> f64 {
        match self.profile {
            Profile::Constant => 1.0,
            Profile::Block(_) => self.profile.value((0..dim).map(|i| z[i] * z[i]).sum::<f64>().sqrt()),
            p => {
                let r2: f64 = (0..dim).map(|i| wrap(z[i] - self.center[i], period).powi(2)).sum();
                p.value(r2.sqrt() / self.radius)
            }
        }
    }
}

/// `coeff * a(y) * b(xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolTerm {
    pub coeff: Complex64,
    pub space: Atom,
    pub freq: Atom,
}

/// A finite sum of separable terms, optionally declared to live in `B_g(center, radius)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSymbol {
    pub dim: usize,
    pub metric: GMetric,
    pub terms: Vec<SymbolTerm>,
    pub support: Option<(PhasePoint, f64)>,
    /// Result of the support certification (true when nothing is declared).
    pub certified: bool,
}

impl TestSymbol {
    pub fn new(dim: usize, metric: GMetric, terms: Vec<SymbolTerm>, support: Option<(PhasePoint, f64)>) -> Self {
        let mut s = Self { dim, metric, terms, support, certified: true };
        s.certified = s.certify_support();
        s
    }

    /// `phi = 1`.
    pub fn identity(dim: usize, metric: GMetric) -> Self {
        let t = SymbolTerm { coeff: Complex64::new(1.0, 0.0), space: Atom::constant(), freq: Atom::constant() };
        Self::new(dim, metric, vec![t], None)
    }

    /// `phi = b(xi)` alone.
    pub fn multiplier(dim: usize, metric: GMetric, freq: Atom) -> Self {
        let t = SymbolTerm { coeff: Complex64::new(1.0, 0.0), space: Atom::constant(), freq };
        Self::new(dim, metric, vec![t], None)
    }

    /// One tensor term `profile(|y - Y_y|/(rho_y K)) profile(|xi - Y_xi|/(rho_xi h))`
    /// declared in `B_g(Y, r)`; needs `rho_y^2 + rho_xi^2 <= r^2`.
    pub fn tensor(dim: usize, metric: GMetric, center: PhasePoint, r: f64, shape: (f64, f64), profile: (Profile, Profile)) -> Self {
        let t = SymbolTerm {
            coeff: Complex64::new(1.0, 0.0),
            space: Atom { profile: profile.0, center: center.x, radius: shape.0 * metric.k },
            freq: Atom { profile: profile.1, center: center.xi, radius: shape.1 * metric.h },
        };
        Self::new(dim, metric, vec![t], Some((center, r)))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.terms.iter_mut().for_each(|t| t.coeff *= c);
        s
    }

    /// Moves the declared center (and every atom) by `shift`.
    pub fn translated(&self, shift: &PhasePoint) -> Self {
        let mut s = self.clone();
        for t in &mut s.terms {
            for i in 0..3 {
                t.space.center[i] += shift.x[i];
                t.freq.center[i] += shift.xi[i];
            }
        }
        if let Some((c, _)) = &mut s.support {
            for i in 0..3 {
                c.x[i] += shift.x[i];
                c.xi[i] += shift.xi[i];
            }
        }
        s
    }

    pub fn eval(&self, y: &[f64; 3], xi: &[f64; 3], period: Option<f64>) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.coeff * (t.space.eval(y, self.dim, period) * t.freq.eval(xi, self.dim, None)))
            .sum()
    }

    /// Every term's support box must sit in `B_g(center, 1.05 r)`, or the
    /// symbol must be below `1e-10` of its peak wherever it leaves that ball.
    fn certify_support(&self) -> bool {
        let Some((center, r)) = self.support else {
            return true;
        };
        let m = self.metric;
        let limit = SUPPORT_MARGIN * r;
        let mut boxed = true;
        for t in &self.terms {
            if !(t.space.profile.is_compact() && t.freq.profile.is_compact()) {
                return false;
            }
            let dy: f64 = (0..self.dim).map(|i| (t.space.center[i] - center.x[i]).powi(2)).sum::<f64>().sqrt();
            let de: f64 = (0..self.dim).map(|i| (t.freq.center[i] - center.xi[i]).powi(2)).sum::<f64>().sqrt();
            let reach = ((dy + t.space.radius) / m.k).powi(2) + ((de + t.freq.radius) / m.h).powi(2);
            if reach > limit * limit {
                boxed = false;
            }
        }
        if boxed {
            return true;
        }
        // sampled check over each term's support box
        let samples = if self.dim == 1 { 41 } else { 9 };
        let mut peak: f64 = 0.0;
        let mut outside: f64 = 0.0;
        for t in &self.terms {
            let pts = box_samples(self.dim, t, samples);
            for p in pts {
                let v = self.eval(&p.x, &p.xi, None).norm();
                if m.distance_sq(&p, &center, self.dim, None).sqrt() > limit {
                    outside = outside.max(v);
                } else {
                    peak = peak.max(v);
                }
            }
        }
        outside <= SUPPORT_TOLERANCE * peak
    }

    /// `||phi||_{j,g}` for `j = 0..=j_max`: sampled sup over the declared
    /// ball of directional derivatives along g-unit vectors (central
    /// differences in the scaled coordinates `(y/K, xi/h)`).
    pub fn seminorms(&self, j_max: u32) -> Result<Vec<f64>> {
        let (center, r) = self.support.ok_or_else(|| Error::UncertifiedSupport("seminorms need a declared support ball".into()))?;
        let d = self.dim;
        let n = 2 * d;
        let per_axis: usize = match d {
            1 => 25,
            2 => 9,
            _ => 5,
        };
        let reach = SUPPORT_MARGIN * r;
        let mut points = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let z: Vec<f64> = idx.iter().map(|&i| -reach + 2.0 * reach * i as f64 / (per_axis - 1) as f64).collect();
            if z.iter().map(|v| v * v).sum::<f64>() <= reach * reach {
                points.push(z);
            }
            let mut a = 0;
            while a < n {
                idx[a] += 1;
                if idx[a] < per_axis {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == n {
                break;
            }
        }
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for a in 0..n {
            let mut e = vec![0.0; n];
            e[a] = 1.0;
            dirs.push(e);
            for b in a + 1..n {
                for sgn in [1.0, -1.0] {
                    let mut e = vec![0.0; n];
                    e[a] = std::f64::consts::FRAC_1_SQRT_2;
                    e[b] = sgn * std::f64::consts::FRAC_1_SQRT_2;
                    dirs.push(e);
                }
            }
        }
        let m = self.metric;
        let at = |z: &[f64]| -> Complex64 {
            let mut y = center.x;
            let mut xi = center.xi;
            for i in 0..d {
                y[i] += z[i] * m.k;
                xi[i] += z[d + i] * m.h;
            }
            self.eval(&y, &xi, None)
        };
        let step = 0.02 * r;
        let out: Vec<f64> = (0..=j_max)
            .into_par_iter()
            .map(|k| {
                let mut best: f64 = 0.0;
                for p in &points {
                    if k == 0 {
                        best = best.max(at(p).norm());
                        continue;
                    }
                    for e in &dirs {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for j in 0..=k {
                            let s = (j as f64 - k as f64 / 2.0) * step;
                            let z: Vec<f64> = p.iter().zip(e).map(|(a, b)| a + s * b).collect();
                            let w = binomial(k, j) * if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                            acc += at(&z) * w;
                        }
                        best = best.max(acc.norm() / step.powi(k as i32));
                    }
                }
                best
            })
            .collect();
        // ||phi||_{j,g} is a sup over all orders up to j
        let mut run: f64 = 0.0;
        Ok(out.into_iter().map(|v| {
            run = run.max(v);
            run
        }).collect())
    }
}

fn box_samples(dim: usize, t: &SymbolTerm, m: usize) -> Vec<PhasePoint> {
    let n = 2 * dim;
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let mut p = PhasePoint { x: t.space.center, xi: t.freq.center };
        for i in 0..dim {
            let a = -1.0 + 2.0 * idx[i] as f64 / (m - 1) as f64;
            let b = -1.0 + 2.0 * idx[dim + i] as f64 / (m - 1) as f64;
            p.x[i] += a * t.space.radius;
            p.xi[i] += b * t.freq.radius;
        }
        out.push(p);
        let mut a = 0;
        while a < n {
            idx[a] += 1;
            if idx[a] < m {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == n {
            return out;
        }
    }
}

/// `phi^D u = sum_i coeff_i b_i(D)(a_i u)`.
pub fn quantize(phi: &TestSymbol, u: &Field) -> Result<Field> {
    let grid = *u.grid();
    if grid.dim() != phi.dim {
        return Err(Error::InvalidArgument(format!("symbol dimension {} on a {}-d grid", phi.dim, grid.dim())));
    }
    if !phi.certified {
        return Err(Error::UncertifiedSupport(format!(
            "symbol exceeds {SUPPORT_TOLERANCE:e} of its peak outside {SUPPORT_MARGIN} times its declared g-ball"
        )));
    }
    let period = Some(grid.period());
    let mut total = vec![Complex64::new(0.0, 0.0); grid.len()];
    for t in &phi.terms {
        let au = match t.space.profile {
            Profile::Constant => u.clone(),
            _ => {
                let a = Field::from_real_fn(grid, |x| t.space.eval(x, phi.dim, period));
                a.mul(u)
            }
        };
        let spec = au.spectrum();
        for (i, c) in spec.iter().enumerate() {
            if *c != Complex64::new(0.0, 0.0) {
                total[i] += t.coeff * c * t.freq.eval(&grid.frequency(i), phi.dim, None);
            }
        }
    }
    Field::from_spectrum(grid, total)
}

/// The defining double sum `sum_xi e^{i x.xi} N^{-1} sum_y e^{-i y.xi} phi(y, xi) u(y)`
/// evaluated point by point, `O(N^2)`.
pub fn quantize_direct(phi: &TestSymbol, u: &Field) -> Result<Field> {
    let grid = *u.grid();
    let period = Some(grid.period());
    let pts = grid.points();
    let freqs = grid.frequencies();
    let n = grid.len() as f64;
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let coeffs: Vec<Complex64> = freqs
        .par_iter()
        .map(|xi| {
            pts.iter()
                .zip(u.samples())
                .map(|(y, uy)| Complex64::from_polar(1.0, -dot(y, xi)) * phi.eval(y, xi, period) * uy)
                .sum::<Complex64>()
                / n
        })
        .collect();
    let out = pts
        .par_iter()
        .map(|x| freqs.iter().zip(&coeffs).map(|(xi, c)| Complex64::from_polar(1.0, dot(x, xi)) * c).sum())
        .collect();
    Field::new(grid, out)
}

/// A certified 1-d symbol with one to three separable terms drawn from
/// bumps and splines of order 3 to 7, centered within `0.1` g-units of a
/// random phase-space point, with a declared support ball of radius 1.
pub fn random_symbol<R: Rng>(rng: &mut R, period: f64) -> TestSymbol {
    let m = GMetric { k: 0.8 + rng.gen::<f64>(), h: 1.5 + 2.0 * rng.gen::<f64>() };
    let center = PhasePoint { x: [period * rng.gen::<f64>(), 0.0, 0.0], xi: [6.0 * rng.gen::<f64>() - 3.0, 0.0, 0.0] };
    let terms = rng.gen_range(1..4);
    let mut out = Vec::new();
    for _ in 0..terms {
        let pick = |rng: &mut R| match rng.gen_range(0..3) {
            0 => Profile::Bump,
            k => Profile::Spline(2 + k as u32 + rng.gen_range(0..3)),
        };
        let shift = 0.2 * (rng.gen::<f64>() - 0.5);
        out.push(SymbolTerm {
            coeff: Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
            space: Atom { profile: pick(rng), center: [center.x[0] + shift * m.k, 0.0, 0.0], radius: 0.5 * m.k },
            freq: Atom { profile: pick(rng), center: [center.xi[0] - shift * m.h, 0.0, 0.0], radius: 0.5 * m.h },
        });
    }
    TestSymbol::new(1, m, out, Some((center, 1.0)))
}

/// Largest `max|quantize - quantize_direct| / max(|u|, 1)` over `count`
/// random symbols applied to random band-limited fields on a 1-d grid.
pub fn brute_force_discrepancy(points: usize, box_scale: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let grid = Grid::new(1, points, box_scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let phi = random_symbol(&mut rng, grid.period());
            let u = Field::random_band_limited(grid, 0.45 * grid.nyquist(), false, &mut rng);
            let fast = quantize(&phi, &u)?;
            let slow = quantize_direct(&phi, &u)?;
            Ok(fast.sub(&slow).max_abs() / u.max_abs().max(1.0))
        })
        .collect()
}

/// Family name recorded with every seminorm.
pub const FAMILY_NAME: &str = "tensor-bump-v1";
/// Largest g-distance from the anchor covered by the standard family.
pub const DEFAULT_REACH: f64 = 6.0;
/// Profile of both factors of every family member.
pub const FAMILY_PROFILE: Profile = Profile::Bump;

/// Declared test-symbol family: at each lattice center three tensor
/// bumps with aspect ratios `(1, 1)/sqrt 2`, `(1/2, sqrt 3/2)`,
/// `(sqrt 3/2, 1/2)` (in units of `r`), each normalized to
/// `||phi||_{k,g} = 1`. The lattice is anchored at `X0` with spacing `r` in
/// g-units and, when `reach` is set, stops at g-distance `reach`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolFamily {
    pub name: String,
    pub metric: GMetric,
    pub anchor: PhasePoint,
    pub radius: f64,
    pub reach: Option<f64>,
    pub order: u32,
    /// Profile of both tensor factors.
    pub profile: Profile,
    pub shapes: Vec<(f64, f64)>,
    /// `1 / ||prototype||_{order,g}` per shape.
    pub normalizers: Vec<f64>,
    pub space_centers: Vec<[f64; 3]>,
    pub freq_centers: Vec<[f64; 3]>,
}

impl SymbolFamily {
    pub fn len(&self) -> usize {
        self.shapes.len() * self.space_centers.len() * self.freq_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The versioned family around `anchor` with [`DEFAULT_REACH`].
    pub fn standard(grid: &Grid, metric: GMetric, anchor: &PhasePoint, radius: f64, order: u32) -> Result<Self> {
        Self::build(grid, metric, anchor, radius, order, Some(DEFAULT_REACH), FAMILY_PROFILE)
    }

    pub fn build(
        grid: &Grid,
        metric: GMetric,
        anchor: &PhasePoint,
        radius: f64,
        order: u32,
        reach: Option<f64>,
        profile: Profile,
    ) -> Result<Self> {
        let d = grid.dim();
        let shapes = vec![
            (radius * std::f64::consts::FRAC_1_SQRT_2, radius * std::f64::consts::FRAC_1_SQRT_2),
            (0.5 * radius, radius * 3f64.sqrt() / 2.0),
            (radius * 3f64.sqrt() / 2.0, 0.5 * radius),
        ];
        let origin = PhasePoint { x: [0.0; 3], xi: [0.0; 3] };
        let normalizers = shapes
            .iter()
            .map(|&s| {
                let proto = TestSymbol::tensor(d, metric, origin, radius, s, (profile, profile));
                proto.seminorms(order).map(|v| 1.0 / v[order as usize])
            })
            .collect::<Result<Vec<_>>>()?;
        let period = grid.period();
        let sp = radius * metric.k;
        let fs = radius * metric.h;
        let nyq = grid.nyquist();
        let mut space_axes = Vec::with_capacity(d);
        let mut freq_axes = Vec::with_capacity(d);
        for a in 0..d {
            let steps = match reach {
                Some(r) if 2.0 * r * metric.k < period => (r / radius).floor() as i64,
                // the whole box, without duplicates after wrapping
                _ => ((period / sp).floor() as i64 - 1) / 2,
            };
            space_axes.push((-steps..=steps).map(|i| (anchor.x[a] + i as f64 * sp).rem_euclid(period)).collect::<Vec<_>>());
            let fsteps = reach.map_or(i64::MAX, |r| (r / radius).floor() as i64);
            let lo = (((-nyq - anchor.xi[a]) / fs).ceil() as i64).max(-fsteps);
            let hi = (((nyq - anchor.xi[a]) / fs).floor() as i64).min(fsteps);
            freq_axes.push((lo..=hi).map(|i| anchor.xi[a] + i as f64 * fs).collect::<Vec<_>>());
        }
        Ok(Self {
            name: FAMILY_NAME.to_string(),
            metric,
            anchor: *anchor,
            radius,
            reach,
            order,
            profile,
            shapes,
            normalizers,
            space_centers: lattice(&space_axes),
            freq_centers: lattice(&freq_axes),
        })
    }

    pub fn member(&self, dim: usize, shape: usize, center: PhasePoint) -> TestSymbol {
        TestSymbol::tensor(dim, self.metric, center, self.radius, self.shapes[shape], (self.profile, self.profile))
            .scaled(self.normalizers[shape])
    }
}

fn lattice(axes: &[Vec<f64>]) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]];
    for (a, axis) in axes.iter().enumerate() {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p;
                    q[a] = v;
                    q
                })
            })
            .collect();
    }
    out
}

/// Largest term of the seminorm and where it was attained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeminormReport {
    pub value: f64,
    pub argmax: Option<PhasePoint>,
    pub family: String,
    pub members: usize,
    pub order: u32,
    pub n: u32,
}

/// `sup (lambda^2 g(X - X0))^N ||phi^D u||_{L^2}` over family members
/// centered at `X` with `g(X - X0)^{1/2} >= C0 r`. The products `a u` are
/// formed on the twice-finer grid.
pub fn microloc_seminorm(
    u: &Field,
    x0: &PhasePoint,
    metric: GMetric,
    c0: f64,
    r: f64,
    n: u32,
    family: &SymbolFamily,
) -> Result<SeminormReport> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if family.metric != metric || family.radius != r || family.anchor != *x0 {
        return Err(Error::InvalidArgument("family was built for a different metric, radius or anchor".into()));
    }
    let reach2 = family.reach.map_or(f64::INFINITY, |v| v * v);
    // windows are applied on a twice-finer grid so that their Fourier tails
    // do not alias back into the band of u
    let fine = u.zero_padded(2 * u.grid().points_per_axis())?;
    let u = &fine;
    let grid = *u.grid();
    let d = grid.dim();
    let period = Some(grid.period());
    let lam2 = metric.lambda().powi(2);
    let threshold = (c0 * r).powi(2);
    let l = grid.box_scale();
    let measure = grid.box_measure();
    let best = family
        .space_centers
        .par_iter()
        .map(|c| {
            let mut local: (f64, Option<PhasePoint>) = (0.0, None);
            for (s, shape) in family.shapes.iter().enumerate() {
                let ry = shape.0 * metric.k;
                let rx = shape.1 * metric.h;
                let a = Field::from_real_fn(grid, |x| {
                    let r2: f64 = (0..d).map(|i| wrap(x[i] - c[i], period).powi(2)).sum();
                    family.profile.value(r2.sqrt() / ry)
                });
                let w = a.mul(u);
                let spec = w.spectrum();
                for f in &family.freq_centers {
                    let x = PhasePoint { x: *c, xi: *f };
                    let g = metric.distance_sq(&x, x0, d, period);
                    if g < threshold || g > reach2 {
                        continue;
                    }
                    let mut sum = 0.0;
                    // modes within the frequency radius of f
                    let lo: Vec<i64> = (0..d).map(|i| ((f[i] - rx) * l).ceil() as i64).collect();
                    let hi: Vec<i64> = (0..d).map(|i| ((f[i] + rx) * l).floor() as i64).collect();
                    let mut k = lo.clone();
                    'walk: loop {
                        if let Some(idx) = grid.flat_index_of_wavevector(&k) {
                            let xi = grid.frequency(idx);
                            let r2: f64 = (0..d).map(|i| (xi[i] - f[i]).powi(2)).sum();
                            let b = family.profile.value(r2.sqrt() / rx);
                            sum += b * b * spec[idx].norm_sqr();
                        }
                        let mut a = 0;
                        loop {
                            if a == d {
                                break 'walk;
                            }
                            k[a] += 1;
                            if k[a] <= hi[a] {
                                break;
                            }
                            k[a] = lo[a];
                            a += 1;
                        }
                    }
                    let val = (lam2 * g).powi(n as i32) * family.normalizers[s] * (measure * sum).sqrt();
                    if val > local.0 {
                        local = (val, Some(x));
                    }
                }
            }
            local
        })
        .reduce(|| (0.0, None), |a, b| if b.0 > a.0 { b } else { a });
    Ok(SeminormReport { value: best.0, argmax: best.1, family: family.name.clone(), members: family.len(), order: family.order, n })
}

/// `k_N = N + d + 1`, the symbol-regularity order paired with weight `N`.
pub fn regularity_order(n: u32, dim: usize) -> u32 {
    n + dim as u32 + 1
}

#[cfg(test)]
mod tests;
