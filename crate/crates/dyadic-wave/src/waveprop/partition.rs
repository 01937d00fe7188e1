//! Partitions of unity of a frequency ring by small balls, with paired bumps
//! on the reflected side.

use super::{norm, RingSpec};
use crate::dyadic::smooth_tail;
use crate::error::{Error, Result};
use crate::grid::WaveState;
use serde::{Deserialize, Serialize};

/// `exp(1 - 1/(1 - z^2))` on `|z| < 1`, zero outside.
pub fn smooth_bump(z: f64) -> f64 {
    let z2 = z * z;
    if z2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - z2)).exp()
    }
}

/// Default ratio of the covering radius to the bump radius.
pub const DEFAULT_KAPPA: f64 = 0.95;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingPartition {
    pub ring: RingSpec,
    pub dim: usize,
    pub h: f64,
    /// Every ring point lies within `kappa * h` of some center.
    pub kappa: f64,
    /// Paired bumps equal 1 on `B(-xi_nu, (1 + paired_plateau) h)`.
    pub paired_plateau: f64,
    pub centers: Vec<[f64; 3]>,
}

/// Lattice with covering radius `radius`: spacing `2R` (d=1), triangular
/// (d=2), body-centered cubic (d=3).
fn covering_lattice(dim: usize, radius: f64, focus: &[f64; 3], reach: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    match dim {
        1 => {
            let a = 2.0 * radius;
            let lo = ((focus[0] - reach) / a).floor() as i64;
            let hi = ((focus[0] + reach) / a).ceil() as i64;
            for i in lo..=hi {
                out.push([i as f64 * a, 0.0, 0.0]);
            }
        }
        2 => {
            let a = 3f64.sqrt() * radius;
            let b = a * 3f64.sqrt() / 2.0;
            let jlo = ((focus[1] - reach) / b).floor() as i64 - 1;
            let jhi = ((focus[1] + reach) / b).ceil() as i64 + 1;
            for j in jlo..=jhi {
                let shift = if j.rem_euclid(2) == 1 { 0.5 * a } else { 0.0 };
                let ilo = ((focus[0] - reach - shift) / a).floor() as i64 - 1;
                let ihi = ((focus[0] + reach - shift) / a).ceil() as i64 + 1;
                for i in ilo..=ihi {
                    out.push([i as f64 * a + shift, j as f64 * b, 0.0]);
                }
            }
        }
        _ => {
            let s = 4.0 * radius / 5f64.sqrt();
            let lo: Vec<i64> = (0..3).map(|k| ((focus[k] - reach) / s).floor() as i64 - 1).collect();
            let hi: Vec<i64> = (0..3).map(|k| ((focus[k] + reach) / s).ceil() as i64 + 1).collect();
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let base = [i as f64 * s, j as f64 * s, k as f64 * s];
                        out.push(base);
                        out.push([base[0] + 0.5 * s, base[1] + 0.5 * s, base[2] + 0.5 * s]);
                    }
                }
            }
        }
    }
    out.retain(|c| dist(c, focus) <= reach);
    out
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

/// Partition of the whole ring by `h`-balls.
pub fn build_ring_partition(ring: &RingSpec, dim: usize, h: f64) -> Result<RingPartition> {
    build_ring_partition_near(ring, dim, h, &[0.0; 3], f64::INFINITY)
}

/// The restriction of the global partition to centers that can act on
/// `B(focus, radius)`; the bumps there agree exactly with the global ones.
pub fn build_ring_partition_near(
    ring: &RingSpec,
    dim: usize,
    h: f64,
    focus: &[f64; 3],
    radius: f64,
) -> Result<RingPartition> {
    if !(h > 0.0) || !(1..=3).contains(&dim) {
        return Err(Error::InvalidArgument(format!("partition needs h > 0 and dim in 1..=3, got h={h}, dim={dim}")));
    }
    let kappa = DEFAULT_KAPPA;
    let centers = if kappa * h >= ring.outer {
        vec![[0.0; 3]]
    } else {
        let reach_global = ring.outer + h;
        let reach = if radius.is_finite() { (radius + 2.0 * h).min(norm(focus) + reach_global) } else { reach_global };
        let mut cs = covering_lattice(dim, kappa * h, focus, reach);
        cs.retain(|c| ring.distance(c) < h && norm(c) <= reach_global);
        cs
    };
    Ok(RingPartition { ring: *ring, dim, h, kappa, paired_plateau: 0.25, centers })
}

impl RingPartition {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// `N_h h^d`, the packing constant of this covering.
    pub fn packing_constant(&self) -> f64 {
        self.len() as f64 * self.h.powi(self.dim as i32)
    }

    /// `|ring| / |B_h|`.
    pub fn area_ratio_estimate(&self) -> f64 {
        let d = self.dim as i32;
        (self.ring.outer.powi(d) - self.ring.inner.powi(d)) / self.h.powi(d)
    }

    fn raw(&self, nu: usize, xi: &[f64; 3]) -> f64 {
        smooth_bump(dist(xi, &self.centers[nu]) / self.h)
    }

    /// `sum_mu b_mu(xi)`.
    pub fn bump_sum(&self, xi: &[f64; 3]) -> f64 {
        (0..self.len()).map(|m| self.raw(m, xi)).sum()
    }

    /// Indices of the bumps that do not vanish at `xi`.
    pub fn active(&self, xi: &[f64; 3]) -> Vec<usize> {
        (0..self.len()).filter(|&m| dist(xi, &self.centers[m]) < self.h).collect()
    }

    /// `phi_nu(xi) = b_nu(xi) / sum_mu b_mu(xi)` (0 where no bump is active).
    pub fn phi(&self, nu: usize, xi: &[f64; 3]) -> f64 {
        let b = self.raw(nu, xi);
        if b == 0.0 {
            return 0.0;
        }
        b / self.bump_sum(xi)
    }

    /// All `phi_nu(xi)` at once, as `(nu, value)` pairs for the active bumps.
    pub fn phis(&self, xi: &[f64; 3]) -> Vec<(usize, f64)> {
        let act = self.active(xi);
        let raws: Vec<f64> = act.iter().map(|&m| self.raw(m, xi)).collect();
        let s: f64 = raws.iter().sum();
        act.into_iter().zip(raws).map(|(m, b)| (m, b / s)).collect()
    }

    /// Paired bump: 1 on `B(-xi_nu, (1 + plateau) h)`, 0 outside `B(-xi_nu, 2h)`.
    pub fn phi_tilde(&self, nu: usize, zeta: &[f64; 3]) -> f64 {
        let c = self.centers[nu];
        let r = dist(zeta, &[-c[0], -c[1], -c[2]]) / self.h;
        let a = 1.0 + self.paired_plateau;
        smooth_tail((r - a) / (2.0 - a))
    }
}

/// `(sum_nu ||phi_nu(D) gamma||^2, sum_nu ||phi~_nu(D) gamma||^2) / ||gamma||^2`
/// for `gamma = (grad u_0, u_1)` supported in the ring.
pub fn almost_orthogonality_check(state: &WaveState, partition: &RingPartition) -> Result<(f64, f64)> {
    let grid = *state.grid();
    let spec_u = state.position.spectrum();
    let spec_v = state.velocity.spectrum();
    let (mut total, mut s_phi, mut s_tilde) = (0.0, 0.0, 0.0);
    for i in 0..grid.len() {
        let xi = grid.frequency(i);
        let w = spec_u[i].norm_sqr() * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) + spec_v[i].norm_sqr();
        if w == 0.0 {
            continue;
        }
        total += w;
        s_phi += w * partition.phis(&xi).iter().map(|(_, p)| p * p).sum::<f64>();
        s_tilde += w * (0..partition.len()).map(|m| partition.phi_tilde(m, &xi).powi(2)).sum::<f64>();
    }
    if total == 0.0 {
        return Err(Error::InvalidArgument("zero data".into()));
    }
    Ok((s_phi / total, s_tilde / total))
}
