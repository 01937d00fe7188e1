//! Bony decomposition `ab = T_a b + T_b a + R(a, b)` computed alias-free on a
//! twice-finer grid, with per-block support certification.

use crate::dyadic::{block_unchecked, DyadicCutoff};
use crate::error::{Error, Result};
use crate::grid::{norm3, Field, Grid};
use num_complex::Complex64;

/// Bounds of the annulus `2^q [c1, c2]` holding the `q`-th summand of `T_a b`.
pub const SUMMAND_INNER: f64 = 0.75 - 2.0 / 3.0;
pub const SUMMAND_OUTER: f64 = 8.0 / 3.0 + 2.0 / 3.0;

/// One `S_{q-1} a Delta_q b` summand.
#[derive(Debug, Clone)]
pub struct Summand {
    pub q: i32,
    pub field: Field,
}

/// The three Bony pieces of a product, on the padded grid.
#[derive(Debug, Clone)]
pub struct BonySplit {
    /// `sum_q S_{q-1} a Delta_q b`
    pub para_ab: Field,
    /// `sum_q S_{q-1} b Delta_q a`
    pub para_ba: Field,
    /// `sum_q sum_{|j|<=1} Delta_q a Delta_{q-j} b`
    pub remainder: Field,
    pub para_ab_terms: Vec<Summand>,
    pub para_ba_terms: Vec<Summand>,
}

impl BonySplit {
    pub fn grid(&self) -> &Grid {
        self.para_ab.grid()
    }

    pub fn reconstruction(&self) -> Field {
        self.para_ab.add(&self.para_ba).add(&self.remainder)
    }
}

/// `S_m` with the convention that `S_m = 0` for `m < 0` (no blocks below `-1`).
fn truncation(field: &Field, m: i32) -> Field {
    if m < 0 {
        return Field::zeros(*field.grid());
    }
    let cut = DyadicCutoff::default();
    field.apply_radial(|r| cut.lowpass_multiplier(m, r))
}

fn top_block(reach: f64) -> i32 {
    // last q whose annulus starts below the reach
    let mut q = -1;
    while DyadicCutoff::default().block_inner(q + 1) < reach {
        q += 1;
    }
    q
}

/// Pads both factors to a grid with twice the points, after checking that
/// their spectra sit inside half the Nyquist band.
fn padded_pair(a: &Field, b: &Field) -> Result<(Field, Field)> {
    a.check_same_grid(b)?;
    let grid = a.grid();
    let limit = 0.5 * grid.nyquist();
    for f in [a, b] {
        let reach = f.spectral_reach(1e-14);
        if reach > limit {
            return Err(Error::Headroom { reach, limit });
        }
    }
    let n2 = 2 * grid.points_per_axis();
    Ok((a.zero_padded(n2)?, b.zero_padded(n2)?))
}

/// Bony decomposition of `a b`.
pub fn decompose(a: &Field, b: &Field) -> Result<BonySplit> {
    let (a, b) = padded_pair(a, b)?;
    let grid = *a.grid();
    let reach = a.spectral_reach(1e-14).max(b.spectral_reach(1e-14));
    let q_top = top_block(reach);
    let blocks_a: Vec<Field> = (-1..=q_top).map(|q| block_unchecked(&a, q)).collect();
    let blocks_b: Vec<Field> = (-1..=q_top).map(|q| block_unchecked(&b, q)).collect();
    fn at(v: &[Field], q: i32) -> Option<&Field> {
        if q < -1 {
            None
        } else {
            v.get((q + 1) as usize)
        }
    }
    let mut para_ab = Field::zeros(grid);
    let mut para_ba = Field::zeros(grid);
    let mut remainder = Field::zeros(grid);
    let mut ab_terms = Vec::new();
    let mut ba_terms = Vec::new();
    for q in -1..=q_top {
        let da = at(&blocks_a, q).unwrap();
        let db = at(&blocks_b, q).unwrap();
        let t_ab = truncation(&a, q - 1).mul(db);
        let t_ba = truncation(&b, q - 1).mul(da);
        para_ab = para_ab.add(&t_ab);
        para_ba = para_ba.add(&t_ba);
        ab_terms.push(Summand { q, field: t_ab });
        ba_terms.push(Summand { q, field: t_ba });
        for j in -1..=1 {
            if let Some(dbj) = at(&blocks_b, q - j) {
                remainder = remainder.add(&da.mul(dbj));
            }
        }
    }
    Ok(BonySplit { para_ab, para_ba, remainder, para_ab_terms: ab_terms, para_ba_terms: ba_terms })
}

/// Spectral mass of a `q`-summand outside its certified annulus, relative to its total mass.
pub fn support_leakage(summand: &Summand) -> f64 {
    let grid = summand.field.grid();
    let scale = if summand.q < 0 { 1.0 } else { 2f64.powi(summand.q) };
    // q = -1 and q = 0 summands vanish identically (S_{q-1} = 0)
    let (lo, hi) = (SUMMAND_INNER * scale, SUMMAND_OUTER * scale);
    let mut outside = 0.0;
    let mut total = 0.0;
    for (i, c) in summand.field.spectrum().iter().enumerate() {
        let m = c.norm_sqr();
        total += m;
        let r = norm3(&grid.frequency(i));
        if r < lo || r > hi {
            outside += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (outside / total).sqrt()
    }
}

/// Spectral inverse Laplacian with the zero mode set to 0.
pub fn inverse_laplacian(field: &Field) -> Field {
    field.apply_multiplier(|xi| {
        let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if r2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(-1.0 / r2, 0.0)
        }
    })
}

/// `Delta^{-1} sum_q sum_{|j|<=1} (Delta_q du1)(Delta_{q-j} du2)` on the padded grid.
pub fn remainder_term(du1: &Field, du2: &Field) -> Result<Field> {
    let (a, b) = padded_pair(du1, du2)?;
    let grid = *a.grid();
    let reach = a.spectral_reach(1e-14).max(b.spectral_reach(1e-14));
    let q_top = top_block(reach);
    let blocks_b: Vec<Field> = (-1..=q_top).map(|q| block_unchecked(&b, q)).collect();
    let mut acc = Field::zeros(grid);
    for q in -1..=q_top {
        let da = block_unchecked(&a, q);
        for j in -1..=1 {
            let k = q - j;
            if (-1..=q_top).contains(&k) {
                acc = acc.add(&da.mul(&blocks_b[(k + 1) as usize]));
            }
        }
    }
    Ok(inverse_laplacian(&acc))
}
