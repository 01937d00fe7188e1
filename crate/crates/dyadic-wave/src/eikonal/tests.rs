use super::*;
use crate::grid::{Field, Grid, WaveState};
use crate::waveprop::evolve_free;
use num_complex::Complex64;

/// Band-limited interpolation of grid samples at an arbitrary point.
fn interpolate(grid: &Grid, samples: &[Complex64], x: &[f64; 3]) -> Complex64 {
    let f = Field::new(*grid, samples.to_vec()).unwrap();
    let spec = f.spectrum();
    (0..grid.len())
        .map(|i| {
            let k = grid.frequency(i);
            spec[i] * Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
        })
        .sum()
}

fn real(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&t| Complex64::new(t, 0.0)).collect()
}

fn grid2(n: usize) -> Grid {
    Grid::new(2, n, 1.0).unwrap()
}

#[test]
fn packed_indices() {
    assert_eq!(sym_index(2, 0, 0), 0);
    assert_eq!(sym_index(2, 1, 0), 1);
    assert_eq!(sym_index(2, 1, 1), 2);
    assert_eq!(sym_index(3, 1, 2), 4);
    assert_eq!(sym_index(3, 2, 2), 5);
}

#[test]
fn smallest_eigenvalues() {
    let m = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.0]];
    assert!((min_eigenvalue(&m, 2) - 1.0).abs() < 1e-14);
    let m3 = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
    // eigenvalues of this tridiagonal matrix: 3, 3 +- sqrt(3)
    assert!((min_eigenvalue(&m3, 3) - (3.0 - 3f64.sqrt())).abs() < 1e-12);
    assert_eq!(min_eigenvalue(&[[0.5, 0.0, 0.0], [0.0; 3], [0.0; 3]], 1), 0.5);
}

#[test]
fn positivity_is_enforced() {
    let g = grid2(16);
    let err = MetricSnapshot::from_fn(g, |x| {
        let mut m = [[0.0; 3]; 3];
        m[0][0] = -0.95 * x[0].cos().abs();
        m
    });
    assert!(matches!(err, Err(crate::Error::Positivity { .. })));
    assert!(lens_metric(g, 0.5).is_ok());
}

#[test]
fn metric_jet_matches_finite_differences() {
    let g = grid2(32);
    let m = StandardMetric::Shear.build(g, 0.2).unwrap();
    let x = [0.3, 1.7, 0.0];
    let j = m.jet(&x);
    let e = 1e-5;
    for k in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[k] += e;
        xm[k] -= e;
        let (jp, jm) = (m.jet(&xp), m.jet(&xm));
        for a in 0..2 {
            for b in 0..2 {
                let fd = (jp.a[a][b] - jm.a[a][b]) / (2.0 * e);
                assert!((fd - j.da[k][a][b]).abs() < 1e-8);
                for l in 0..2 {
                    let fd2 = (jp.da[l][a][b] - jm.da[l][a][b]) / (2.0 * e);
                    assert!((fd2 - j.dda[k][l][a][b]).abs() < 1e-8);
                }
            }
        }
    }
    // on lattice points the jet reproduces the samples
    let p = 37;
    let xp = g.point(p);
    let mat = m.matrix_at(p);
    let jj = m.jet(&xp);
    for a in 0..2 {
        for b in 0..2 {
            assert!((mat[a][b] - jj.a[a][b]).abs() < 1e-13);
        }
    }
}

#[test]
fn flat_rays_are_straight() {
    let g = grid2(16);
    let m = MetricSnapshot::flat(g);
    let x0 = PhasePoint { x: [1.0, 2.0, 0.0], xi: [3.0, 4.0, 0.0] };
    let ray = hamiltonian_flow(&m, &x0, 2.0, 40).unwrap();
    let end = ray.end();
    assert!((end.x[0] - (1.0 + 2.0 * 0.6)).abs() < 1e-13);
    assert!((end.x[1] - (2.0 + 2.0 * 0.8)).abs() < 1e-13);
    assert_eq!(end.xi, x0.xi);
    let jac = ray.jacobians.last().unwrap();
    assert!((jac[0][0] - 1.0).abs() < 1e-14 && jac[0][1].abs() < 1e-14 && (jac[1][1] - 1.0).abs() < 1e-14);
}

fn bump_metric(strength: f64) -> MetricSnapshot {
    // conformal bump centered at (pi, pi): speed^2 = 1 + s b(x)
    let g = grid2(32);
    MetricSnapshot::from_fn(g, |x| {
        let b = 0.25 * (1.0 - x[0].cos()) * (1.0 - x[1].cos());
        let mut m = [[0.0; 3]; 3];
        m[0][0] = strength * b;
        m[1][1] = strength * b;
        m
    })
    .unwrap()
}

#[test]
fn rays_bend_toward_slow_regions() {
    let pi = std::f64::consts::PI;
    let x0 = PhasePoint { x: [pi - 1.5, pi + 0.6, 0.0], xi: [1.0, 0.0, 0.0] };
    for (s, sign) in [(-0.3, -1.0), (0.3, 1.0)] {
        let m = bump_metric(s);
        let ray = hamiltonian_flow(&m, &x0, 3.0, 600).unwrap();
        let end = ray.end();
        // slow center (s < 0) pulls the ray down toward x2 = pi
        assert!(sign * (end.x[1] - x0.x[1]) > 0.0, "s = {s}: x2 moved to {}", end.x[1]);
        assert!(ray.hamiltonian_drift(&m) < 1e-6 * 3.0);
        // refined-step oracle
        let fine = hamiltonian_flow(&m, &x0, 3.0, 1200).unwrap().end();
        assert!((fine.x[1] - end.x[1]).abs() < 1e-9);
    }
}

#[test]
fn rays_are_reversible() {
    let m = StandardMetric::Anisotropic.build(grid2(32), 0.15).unwrap();
    let x0 = PhasePoint { x: [0.4, 2.2, 0.0], xi: [0.6, -0.9, 0.0] };
    let fwd = hamiltonian_flow(&m, &x0, 2.5, 500).unwrap().end();
    let back = hamiltonian_flow(&m, &fwd, -2.5, 500).unwrap().end();
    for k in 0..2 {
        assert!((back.x[k] - x0.x[k]).abs() < 1e-8);
        assert!((back.xi[k] - x0.xi[k]).abs() < 1e-8);
    }
}

#[test]
fn zero_momentum_rejected() {
    let m = MetricSnapshot::flat(grid2(16));
    assert!(hamiltonian_flow(&m, &PhasePoint { x: [0.0; 3], xi: [0.0; 3] }, 1.0, 10).is_err());
}

#[test]
fn flat_phase_is_exact() {
    let m = MetricSnapshot::flat(grid2(16));
    let cfg = EikonalConfig { coarse_points: 16, ..Default::default() };
    let times = [0.0, 0.3, 0.7];
    let p = solve_eikonal(&m, &[[1.0, 1.0, 0.0]], &times, &cfg).unwrap();
    for (k, t) in times.iter().enumerate() {
        assert!(p.theta[0][k].iter().all(|v| (v + t).abs() < 1e-13));
    }
    assert_eq!(p.validity, 0.7);
    let xi = [3.0, 4.0, 0.0];
    let pt = 5;
    let x = p.grid.point(pt);
    assert!((p.phase(0, 2, pt, &xi) - (x[0] * 3.0 + x[1] * 4.0 - 0.7 * 5.0)).abs() < 1e-12);
    let s = solve_transport(&p, &m, 2, &cfg).unwrap();
    for k in 0..times.len() {
        assert!(s.tau[0][0][k].iter().all(|v| (v - 1.0).norm() < 1e-13));
        assert!(s.tau[0][1][k].iter().all(|v| v.norm() < 1e-13));
        assert!(s.tau[0][2][k].iter().all(|v| v.norm() < 1e-13));
    }
}

#[test]
fn phase_is_constant_along_rays() {
    // Phi is homogeneous of degree one, so it is transported unchanged along
    // bicharacteristics: theta(t, x(t)) = (x_0 - x(t)).omega
    let m = StandardMetric::Conformal.build(grid2(32), 0.12).unwrap();
    let cfg = EikonalConfig::default();
    let omega = [0.8, 0.6, 0.0];
    let times = [0.0, 0.25, 0.5];
    let p = solve_eikonal(&m, &[omega], &times, &cfg).unwrap();
    for x0 in [[0.5, 0.5, 0.0], [2.0, 4.0, 0.0], [5.5, 1.0, 0.0]] {
        let ray = hamiltonian_flow(&m, &PhasePoint { x: x0, xi: omega }, 0.5, 200).unwrap();
        for (k, &t) in times.iter().enumerate().skip(1) {
            let idx = (t / 0.5 * 200.0).round() as usize;
            let x = ray.positions[idx];
            let th = interpolate(&p.grid, &real(&p.theta[0][k]), &x).re;
            let oracle = (x0[0] - x[0]) * omega[0] + (x0[1] - x[1]) * omega[1];
            assert!((th - oracle).abs() < 1e-9, "t={t}: {th} vs {oracle}");
        }
    }
}

#[test]
fn phase_deviation_is_linear_in_metric_size() {
    let cfg = EikonalConfig::default();
    let times = [0.0, 0.5];
    let dev = |eps: f64| {
        let m = StandardMetric::Shear.build(grid2(32), eps).unwrap();
        let p = solve_eikonal(&m, &[[1.0, 0.0, 0.0]], &times, &cfg).unwrap();
        p.theta[0][1].iter().map(|v| (v + 0.5).abs()).fold(0.0, f64::max)
    };
    let (a, b) = (dev(0.01), dev(0.02));
    assert!(a > 0.0 && a < 0.01 * 0.5 * 2.0);
    assert!((b / a - 2.0).abs() < 0.05, "ratio {}", b / a);
}

#[test]
fn eikonal_residual_at_collocation_points() {
    let m = StandardMetric::Anisotropic.build(grid2(32), 0.12).unwrap();
    let cfg = EikonalConfig::default();
    let (t, e) = (0.3, 1e-3);
    let omega = [0.6, 0.8, 0.0];
    let p = solve_eikonal(&m, &[omega], &[0.0, t - e, t, t + e], &cfg).unwrap();
    let g = p.grid;
    let th = Field::new(g, real(&p.theta[0][2])).unwrap();
    let grad = th.gradient();
    for pt in (0..g.len()).step_by(37) {
        let rate = (p.theta[0][3][pt] - p.theta[0][1][pt]) / (2.0 * e);
        let xi = [omega[0] + grad[0].samples()[pt].re, omega[1] + grad[1].samples()[pt].re, 0.0];
        let h = hamiltonian(&m, &g.point(pt), &xi);
        assert!((rate + h).abs() < 1e-6, "point {pt}: {rate} vs {}", -h);
    }
}

#[test]
fn lens_caustic_comes_sooner_for_stronger_lenses() {
    let cfg = EikonalConfig { ray_stride: 2, ray_steps_per_unit: 100, ..Default::default() };
    let g = grid2(32);
    let mut last = f64::INFINITY;
    for s in [0.3, 0.5, 0.7] {
        let m = lens_metric(g, s).unwrap();
        let (t, det) = caustic_scan(&m, &g, &[1.0, 0.0, 0.0], 12.0, &cfg).unwrap();
        let t = t.expect("lens focuses");
        assert!(t < last, "strength {s}: {t} !< {last}");
        assert!(det < cfg.caustic_threshold);
        last = t;
    }
}

#[test]
fn caustic_detection_is_bracketed() {
    let m = lens_metric(grid2(32), 0.5).unwrap();
    let x0 = PhasePoint { x: [-2.0, 0.3, 0.0], xi: [1.0, 0.0, 0.0] };
    let ray = hamiltonian_flow(&m, &x0, 10.0, 2000).unwrap();
    let dets = ray.jacobian_determinants();
    if let Some((t, d)) = ray.caustic_time(0.05) {
        let k = ray.times.iter().position(|&s| s >= t).unwrap();
        assert!(dets[k - 1].abs() >= 0.05 && d.abs() < 0.05);
        // no sign jump across the threshold crossing
        assert!(dets[k - 1].signum() == dets[k].signum() || dets[k].abs() < 0.05);
    }
}

#[test]
fn first_transport_term_scales_with_metric() {
    let cfg = EikonalConfig::default();
    let times = [0.0, 0.4];
    let size = |eps: f64| {
        let m = StandardMetric::Conformal.build(grid2(32), eps).unwrap();
        let p = solve_eikonal(&m, &[[1.0, 0.0, 0.0]], &times, &cfg).unwrap();
        let s = solve_transport(&p, &m, 1, &cfg).unwrap();
        s.tau[0][1][1].iter().map(|v| v.norm()).fold(0.0, f64::max)
    };
    let (a, b) = (size(0.01), size(0.02));
    assert!(a > 0.0 && a < 0.1);
    assert!((b / a - 2.0).abs() < 0.1, "ratio {}", b / a);
}

#[test]
fn leading_amplitude_conservation_along_rays() {
    // sigma_0^2 det J exp(-int (div A . xi)/H dt) is constant along each ray
    let m = StandardMetric::Shear.build(grid2(32), 0.12).unwrap();
    let cfg = EikonalConfig::default();
    let omega = [1.0, 0.0, 0.0];
    let (t_end, steps) = (0.6, 600);
    let times = [0.0, 0.2, 0.4, 0.6];
    let p = solve_eikonal(&m, &[omega], &times, &cfg).unwrap();
    let s = solve_transport(&p, &m, 0, &cfg).unwrap();
    for x0 in [[1.0, 1.0, 0.0], [3.0, 5.0, 0.0]] {
        let ray = hamiltonian_flow(&m, &PhasePoint { x: x0, xi: omega }, t_end, steps).unwrap();
        let dets = ray.jacobian_determinants();
        let rate: Vec<f64> = (0..ray.len())
            .map(|k| {
                let jet = m.jet(&ray.positions[k]);
                let xi = ray.momenta[k];
                let h = hamiltonian(&m, &ray.positions[k], &xi);
                (0..2).map(|j| (0..2).map(|i| jet.da[i][i][j]).sum::<f64>() * xi[j]).sum::<f64>() / h
            })
            .collect();
        let mut integral = 0.0;
        for (k, &t) in times.iter().enumerate() {
            let idx = (t / t_end * steps as f64).round() as usize;
            if idx > 0 {
                let start = (times[k - 1] / t_end * steps as f64).round() as usize;
                for j in start..idx {
                    integral += 0.5 * (rate[j] + rate[j + 1]) * (t_end / steps as f64);
                }
            }
            let sigma = interpolate(&s.grid, &s.tau[0][0][k], &ray.positions[idx]);
            let q = sigma.norm_sqr() * dets[idx] * (-integral).exp();
            assert!((q - 1.0).abs() < 1e-4, "t={t}: {q}");
        }
    }
}

#[test]
fn transport_order_is_capped() {
    let m = MetricSnapshot::flat(grid2(16));
    let cfg = EikonalConfig { coarse_points: 16, ..Default::default() };
    let p = solve_eikonal(&m, &[[1.0, 0.0, 0.0]], &[0.0, 0.1], &cfg).unwrap();
    assert!(solve_transport(&p, &m, 3, &cfg).is_err());
}

#[test]
fn flat_parametrix_is_free_evolution() {
    let g = grid2(64);
    let m = MetricSnapshot::flat(g);
    let (u0, _) = packet_data(&g, &m, 3, 0.3, 1.0).unwrap();
    // u_1 = 0 excites both branches
    let u1 = Field::zeros(g);
    let cfg = ParametrixConfig { max_direct_directions: 64, ..Default::default() };
    let p = build_parametrix(&m, &u0, &u1, &[0.0, 0.2, 0.5], &cfg).unwrap();
    let exact = |t: f64| evolve_free(&WaveState::new(u0.clone(), u1.clone(), 0.0).unwrap(), t).position;
    let series = assemble_parametrix(&p).unwrap();
    for (t, u) in series.iter() {
        assert!(u.relative_distance(&exact(t)) < 1e-8, "t = {t}");
    }
    let c = p.cauchy_data();
    assert!(c.velocity.max_abs() < 1e-10 * u0.max_abs() * 20.0);
}

#[test]
fn flat_residual_is_quadrature_error_only() {
    let g = grid2(64);
    let m = MetricSnapshot::flat(g);
    let (u0, u1) = packet_data(&g, &m, 3, 0.3, 1.0).unwrap();
    let r = parametrix_residual(&m, &u0, &u1, 3, 0.4, None, &ParametrixConfig::default(), &ReferenceConfig::default())
        .unwrap();
    assert!(r.residual < 1e-8, "{}", r.residual);
}

#[test]
fn single_node_is_one_wkb_wave() {
    let g = grid2(32);
    let m = StandardMetric::Conformal.build(g, 0.12).unwrap();
    let mut spec = vec![Complex64::new(0.0, 0.0); g.len()];
    let i = g.flat_index_of_wavevector(&[6, 2]).unwrap();
    spec[i] = Complex64::new(1.0, 0.0);
    let u0 = Field::from_spectrum(g, spec).unwrap();
    let lam = 40f64.sqrt();
    let b = match_branches(&m, &u0, &Field::zeros(g)).unwrap();
    assert_eq!(b.indices, vec![i]);
    // a single-branch choice of u_1 leaves one wave
    let w = branch_frequency(&m, &g.frequency(i));
    let u1 = u0.scale(Complex64::new(0.0, -w));
    let cfg = ParametrixConfig::default();
    let p = build_parametrix(&m, &u0, &u1, &[0.0, 0.3], &cfg).unwrap();
    assert!(p.branches.plus[0].norm() < 1e-14);
    let u = p.at(1);
    let amp = p.branches.minus[0].norm();
    let sig: Vec<Complex64> = p.symbols.tau[0][0][1].iter().zip(&p.symbols.tau[0][1][1]).map(|(a, c)| a + c / lam).collect();
    let sig = Field::new(p.phase.grid, sig).unwrap().resampled(32).unwrap();
    for k in (0..g.len()).step_by(11) {
        assert!((u.samples()[k].norm() - amp * sig.samples()[k].norm()).abs() < 1e-12);
    }
}

#[test]
fn residual_budgets_are_enforced() {
    let g = grid2(64);
    let m = StandardMetric::Conformal.build(g, 0.12).unwrap();
    let (u0, u1) = packet_data(&g, &m, 3, 0.3, 1.0).unwrap();
    let b = IntervalBudget::default();
    let cfg = ParametrixConfig::default();
    let r = ReferenceConfig::default();
    let too_long = b.length_limit(3) * 1.1;
    let e = parametrix_residual(&m, &u0, &u1, 3, too_long, Some(&b), &cfg, &r).unwrap_err();
    assert!(matches!(e, crate::Error::Budget(ref s) if s.contains("asymptotic")));
    let tight = IntervalBudget { eps_hat: 1e-4, ..Default::default() };
    let e = parametrix_residual(&m, &u0, &u1, 3, 0.3, Some(&tight), &cfg, &r).unwrap_err();
    assert!(matches!(e, crate::Error::Budget(ref s) if s.contains("phase budget")));
    assert!((b.length_limit(3) - 8f64.powf(1.0 - 4.0 / 3.0 - 0.05)).abs() < 1e-14);
}

#[test]
fn long_travel_is_rejected() {
    let g = grid2(32);
    let m = MetricSnapshot::flat(g);
    let (u0, u1) = packet_data(&g, &m, 2, 0.0, 1.0).unwrap();
    let e = build_parametrix(&m, &u0, &u1, &[0.0, 2.0], &ParametrixConfig::default()).unwrap_err();
    assert!(matches!(e, crate::Error::Quadrature(_)));
}

#[test]
fn angular_interpolation_is_exact_on_nodes() {
    let needed: Vec<[f64; 3]> = (0..40).map(|k| 0.2 + 0.01 * k as f64).map(|a: f64| [a.cos(), a.sin(), 0.0]).collect();
    let cfg = ParametrixConfig { angular_nodes: 9, max_direct_directions: 4, ..Default::default() };
    let s = direction_sampler(2, &needed, &cfg).unwrap();
    let dirs = s.directions();
    assert_eq!(dirs.len(), 9);
    let w = s.weights(&dirs[3]);
    assert_eq!(w, vec![(3, 1.0)]);
    // weights reproduce smooth functions of the angle
    let om = [0.37f64.cos(), 0.37f64.sin(), 0.0];
    let f = |d: &[f64; 3]| d[1].atan2(d[0]).sin();
    let approx: f64 = s.weights(&om).iter().map(|(j, c)| c * f(&dirs[*j])).sum();
    assert!((approx - f(&om)).abs() < 1e-10);
}
