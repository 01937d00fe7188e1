use super::{min_eigenvalue, MetricJet, MetricSnapshot, POSITIVITY_MARGIN};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

type Mat = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: [f64; 3],
    pub xi: [f64; 3],
}

impl PhasePoint {
    /// `(x, -xi)`
    pub fn reflected(&self) -> Self {
        Self { x: self.x, xi: self.xi.map(|v| -v) }
    }
}

/// A bicharacteristic with the variations `J = dx/dx_0`, `K = dxi/dx_0`
/// of the plane-wave flow-out (`J(0) = I`, `K(0) = 0`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ray {
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
    pub momenta: Vec<[f64; 3]>,
    pub jacobians: Vec<Mat>,
    pub momentum_jacobians: Vec<Mat>,
    pub dim: usize,
}

/// `H(x, xi) = (xi . A(x) xi)^{1/2}` and its derivatives up to order two.
#[derive(Debug, Clone, Copy, Default)]
pub struct HamiltonianJet {
    pub h: f64,
    pub h_xi: [f64; 3],
    pub h_x: [f64; 3],
    pub h_xixi: Mat,
    /// `h_xix[i][k] = d^2 H / d xi_i d x_k`
    pub h_xix: Mat,
    pub h_xx: Mat,
}

fn quad(m: &Mat, a: &[f64; 3], b: &[f64; 3], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a[i] * m[i][j] * b[j];
        }
    }
    s
}

fn matvec(m: &Mat, v: &[f64; 3], d: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..d {
        for j in 0..d {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

pub fn hamiltonian_jet(jet: &MetricJet, xi: &[f64; 3], d: usize) -> HamiltonianJet {
    let q = quad(&jet.a, xi, xi, d);
    let h = q.sqrt();
    let axi = matvec(&jet.a, xi, d);
    let mut out = HamiltonianJet { h, ..Default::default() };
    // dq/dx_k = xi . dA_k xi
    let mut qx = [0.0; 3];
    let mut daxi = [[0.0; 3]; 3];
    for k in 0..d {
        qx[k] = quad(&jet.da[k], xi, xi, d);
        daxi[k] = matvec(&jet.da[k], xi, d);
    }
    let h3 = h * h * h;
    for i in 0..d {
        out.h_xi[i] = axi[i] / h;
        out.h_x[i] = qx[i] / (2.0 * h);
        for j in 0..d {
            out.h_xixi[i][j] = jet.a[i][j] / h - axi[i] * axi[j] / h3;
            out.h_xix[i][j] = daxi[j][i] / h - axi[i] * qx[j] / (2.0 * h3);
            out.h_xx[i][j] = quad(&jet.dda[i][j], xi, xi, d) / (2.0 * h) - qx[i] * qx[j] / (4.0 * h3);
        }
    }
    out
}

pub fn hamiltonian(metric: &MetricSnapshot, x: &[f64; 3], xi: &[f64; 3]) -> f64 {
    let jet = metric.jet(x);
    quad(&jet.a, xi, xi, metric.dim()).sqrt()
}

#[derive(Clone, Copy)]
struct State {
    x: [f64; 3],
    xi: [f64; 3],
    j: Mat,
    k: Mat,
}

impl State {
    fn axpy(&self, a: f64, o: &State) -> State {
        let mut s = *self;
        for i in 0..3 {
            s.x[i] += a * o.x[i];
            s.xi[i] += a * o.xi[i];
            for c in 0..3 {
                s.j[i][c] += a * o.j[i][c];
                s.k[i][c] += a * o.k[i][c];
            }
        }
        s
    }
}

fn rhs(metric: &MetricSnapshot, s: &State, d: usize) -> Result<State> {
    let jet = metric.jet(&s.x);
    let me = min_eigenvalue(&jet.a, d);
    if me < POSITIVITY_MARGIN {
        return Err(Error::Positivity { min_eig: me, margin: POSITIVITY_MARGIN });
    }
    let hj = hamiltonian_jet(&jet, &s.xi, d);
    let mut out = State { x: [0.0; 3], xi: [0.0; 3], j: [[0.0; 3]; 3], k: [[0.0; 3]; 3] };
    for i in 0..d {
        out.x[i] = hj.h_xi[i];
        out.xi[i] = -hj.h_x[i];
        for c in 0..d {
            let mut dj = 0.0;
            let mut dk = 0.0;
            for m in 0..d {
                dj += hj.h_xix[i][m] * s.j[m][c] + hj.h_xixi[i][m] * s.k[m][c];
                dk += -hj.h_xx[i][m] * s.j[m][c] - hj.h_xix[m][i] * s.k[m][c];
            }
            out.j[i][c] = dj;
            out.k[i][c] = dk;
        }
    }
    Ok(out)
}

/// RK4 integration of `x' = H_xi`, `xi' = -H_x` and the variational system
/// from `0` to `t_end` (either sign) with `steps` equal steps.
pub fn hamiltonian_flow(metric: &MetricSnapshot, x0: &PhasePoint, t_end: f64, steps: usize) -> Result<Ray> {
    let d = metric.dim();
    if x0.xi[..d].iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("ray momentum must be nonzero".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let mut id = [[0.0; 3]; 3];
    for (i, row) in id.iter_mut().enumerate().take(d) {
        row[i] = 1.0;
    }
    let mut s = State { x: x0.x, xi: x0.xi, j: id, k: [[0.0; 3]; 3] };
    let dt = t_end / steps as f64;
    let mut ray = Ray {
        times: vec![0.0],
        positions: vec![s.x],
        momenta: vec![s.xi],
        jacobians: vec![s.j],
        momentum_jacobians: vec![s.k],
        dim: d,
    };
    for n in 0..steps {
        let k1 = rhs(metric, &s, d)?;
        let k2 = rhs(metric, &s.axpy(0.5 * dt, &k1), d)?;
        let k3 = rhs(metric, &s.axpy(0.5 * dt, &k2), d)?;
        let k4 = rhs(metric, &s.axpy(dt, &k3), d)?;
        s = s.axpy(dt / 6.0, &k1).axpy(dt / 3.0, &k2).axpy(dt / 3.0, &k3).axpy(dt / 6.0, &k4);
        ray.times.push(dt * (n + 1) as f64);
        ray.positions.push(s.x);
        ray.momenta.push(s.xi);
        ray.jacobians.push(s.j);
        ray.momentum_jacobians.push(s.k);
    }
    Ok(ray)
}

pub fn determinant(m: &Mat, d: usize) -> f64 {
    match d {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

impl Ray {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end(&self) -> PhasePoint {
        PhasePoint { x: *self.positions.last().unwrap(), xi: *self.momenta.last().unwrap() }
    }

    pub fn jacobian_determinants(&self) -> Vec<f64> {
        self.jacobians.iter().map(|j| determinant(j, self.dim)).collect()
    }

    /// `max_t |H(t) - H(0)| / H(0)`.
    pub fn hamiltonian_drift(&self, metric: &MetricSnapshot) -> f64 {
        let h0 = hamiltonian(metric, &self.positions[0], &self.momenta[0]);
        self.positions
            .iter()
            .zip(&self.momenta)
            .map(|(x, xi)| (hamiltonian(metric, x, xi) - h0).abs() / h0)
            .fold(0.0, f64::max)
    }

    /// First sample with `|det J| < threshold`, linearly bracketed between the
    /// last sample above and the first below. `None` if never crossed.
    pub fn caustic_time(&self, threshold: f64) -> Option<(f64, f64)> {
        let dets = self.jacobian_determinants();
        for k in 1..dets.len() {
            if dets[k].abs() < threshold {
                let (a, b) = (dets[k - 1].abs(), dets[k].abs());
                let s = if a > b { (a - threshold) / (a - b) } else { 1.0 };
                let t = self.times[k - 1] + s * (self.times[k] - self.times[k - 1]);
                return Some((t, dets[k]));
            }
        }
        None
    }
}
