use super::*;
use crate::grid::Field;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_state(dim: usize, n: usize, seed: u64) -> WaveState {
    let g = Grid::new(dim, n, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Field::random_band_limited(g, n as f64 / 4.0, false, &mut rng);
    let v = Field::random_band_limited(g, n as f64 / 4.0, false, &mut rng);
    WaveState::new(u, v, 0.0).unwrap()
}

fn state_distance(a: &WaveState, b: &WaveState) -> f64 {
    a.position.relative_distance(&b.position).max(a.velocity.relative_distance(&b.velocity))
}

#[test]
fn evolve_zero_is_identity() {
    let s = random_state(2, 16, 1);
    assert!(state_distance(&evolve_free(&s, 0.0), &s) < 1e-14);
}

#[test]
fn unit_mode_flips_sign_at_pi() {
    let g = Grid::new(1, 16, 1.0).unwrap();
    let u = Field::plane_wave(g, &[1]);
    let s = WaveState::new(u.clone(), Field::zeros(g), 0.0).unwrap();
    let e = evolve_free(&s, std::f64::consts::PI);
    assert!(e.position.relative_distance(&u.scale_real(-1.0)) < 1e-14);
    assert!(e.velocity.max_abs() < 1e-14);
}

#[test]
fn zero_mode_moves_linearly() {
    let g = Grid::new(1, 8, 1.0).unwrap();
    let one = Field::from_real_fn(g, |_| 1.0);
    let s = WaveState::new(Field::zeros(g), one.clone(), 0.0).unwrap();
    let e = evolve_free(&s, 2.5);
    assert!(e.position.relative_distance(&one.scale_real(2.5)) < 1e-14);
}

#[test]
fn energy_is_conserved() {
    let s = random_state(2, 32, 7);
    let e0 = s.energy();
    for k in 1..=10 {
        let e = evolve_free(&s, k as f64).energy();
        assert!((e - e0).abs() <= 1e-12 * e0, "t={k}: {e} vs {e0}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn group_law(seed in 0u64..1000, s in -5.0f64..5.0, t in -5.0f64..5.0) {
        let st = random_state(1, 32, seed);
        let two = evolve_free(&evolve_free(&st, s), t);
        let one = evolve_free(&st, s + t);
        prop_assert!(state_distance(&two, &one) < 1e-12);
    }
}

#[test]
fn finite_speed_of_propagation() {
    // compactly supported bump at the origin stays (numerically) inside |x| <= r + t
    let g = Grid::new(1, 512, 8.0).unwrap();
    let u = Field::from_real_fn(g, |x| {
        let y = if x[0] > g.period() / 2.0 { x[0] - g.period() } else { x[0] };
        partition::smooth_bump(y / 2.0)
    });
    let s = WaveState::new(u, Field::zeros(g), 0.0).unwrap();
    let e = evolve_free(&s, 5.0);
    for i in 0..g.len() {
        let d = periodic_distance(&g, &g.point(i), &[0.0; 3]);
        if d > 7.5 {
            assert!(e.position.samples()[i].norm() < 1e-3, "leak at {d}");
        }
    }
}

#[test]
fn ring_spec_validation() {
    assert!(RingSpec::new(0.0, 1.0).is_err());
    assert!(RingSpec::new(2.0, 1.0).is_err());
    let r = RingSpec::new(0.5, 2.0).unwrap();
    assert!(r.with_ball(0.25, [1.0, 0.0, 0.0]).is_ok());
    assert!(r.with_ball(0.75, [1.0, 0.0, 0.0]).is_err());
    assert!(r.with_ball(1.5, [1.0, 0.0, 0.0]).is_err());
}

#[test]
fn partition_single_piece_for_huge_h() {
    let ring = RingSpec::new(1.0, 2.0).unwrap();
    let p = build_ring_partition(&ring, 2, 4.0).unwrap();
    assert_eq!(p.len(), 1);
    for k in 0..50 {
        let a = k as f64 * 0.37;
        let r = 1.0 + k as f64 / 49.0;
        assert!((p.phi(0, &[r * a.cos(), r * a.sin(), 0.0]) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn partition_count_matches_area_ratio() {
    let ring = RingSpec::new(1.0, 2.0).unwrap();
    let p = build_ring_partition(&ring, 2, 0.25).unwrap();
    let est = p.area_ratio_estimate();
    let n = p.len() as f64;
    assert!(n >= 0.5 * est && n <= 2.0 * est, "N = {n}, estimate {est}");
}

fn ring_samples(dim: usize, ring: &RingSpec, count: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = [0.0; 3];
            for c in v.iter_mut().take(dim) {
                *c = crate::grid::gaussian(&mut rng);
            }
            let n = norm(&v);
            let r = ring.inner + (ring.outer - ring.inner) * rng.gen::<f64>();
            v.map(|c| c * r / n)
        })
        .collect()
}

use rand::Rng;

#[test]
fn partition_sums_to_one_on_ring() {
    let ring = RingSpec::new(1.0, 2.0).unwrap();
    for dim in 1..=3 {
        for &h in &[0.5, 0.25] {
            let p = build_ring_partition(&ring, dim, h).unwrap();
            for xi in ring_samples(dim, &ring, 400, dim as u64) {
                let s: f64 = p.phis(&xi).iter().map(|(_, v)| v).sum();
                assert!((s - 1.0).abs() < 1e-10, "dim {dim} h {h}: {s}");
            }
        }
    }
}

#[test]
fn partition_pieces_supported_in_h_balls() {
    let ring = RingSpec::new(1.0, 2.0).unwrap();
    let p = build_ring_partition(&ring, 2, 0.25).unwrap();
    for xi in ring_samples(2, &ring, 300, 3) {
        for (m, v) in p.phis(&xi) {
            let c = p.centers[m];
            let d = norm(&[xi[0] - c[0], xi[1] - c[1], 0.0]);
            assert!(v == 0.0 || d < p.h, "piece {m} nonzero at distance {d}");
        }
    }
    assert!(p.packing_constant() > 0.0);
}

#[test]
fn paired_bump_covers_reflected_piece() {
    let ring = RingSpec::new(1.0, 2.0).unwrap();
    let p = build_ring_partition(&ring, 2, 0.25).unwrap();
    for xi in ring_samples(2, &ring, 200, 4) {
        let neg = [-xi[0], -xi[1], 0.0];
        for (m, v) in p.phis(&xi) {
            if v > 0.0 {
                assert_eq!(p.phi_tilde(m, &neg), 1.0);
            }
        }
    }
    // and vanishes beyond 2h
    let c = p.centers[0];
    assert_eq!(p.phi_tilde(0, &[-c[0] + 2.0 * p.h, -c[1], 0.0]), 0.0);
}

#[test]
fn near_partition_agrees_with_global() {
    let ring = RingSpec::new(0.5, 2.0).unwrap();
    let focus = [1.0, 0.0, 0.0];
    let h = 0.125;
    let g = build_ring_partition(&ring, 3, h).unwrap();
    let n = build_ring_partition_near(&ring, 3, h, &focus, h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let xi = [1.0 + h * (rng.gen::<f64>() - 0.5), h * (rng.gen::<f64>() - 0.5), h * (rng.gen::<f64>() - 0.5)];
        let a: f64 = g.phis(&xi).iter().map(|(_, v)| v * v).sum();
        let b: f64 = n.phis(&xi).iter().map(|(_, v)| v * v).sum();
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn almost_orthogonality_of_ring_pieces() {
    let g = Grid::new(2, 64, 4.0).unwrap();
    let ring = RingSpec::new(1.0, 3.0).unwrap();
    let spec = ring_cap_spectrum(&g, &ring, 0.0);
    let u = Field::from_spectrum(g, spec).unwrap();
    let s = WaveState::new(u, Field::zeros(g), 0.0).unwrap();
    let p = build_ring_partition(&ring, 2, 0.5).unwrap();
    let (a, b) = almost_orthogonality_check(&s, &p).unwrap();
    assert!(a > 1.0 / 3.0 && a <= 1.0 + 1e-12, "phi ratio {a}");
    assert!(b >= 1.0 && b < 16.0, "paired ratio {b}");
}

#[test]
fn decay_fit_recovers_power_law() {
    let x: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-0.75)).collect();
    let f = DecayFit::fit(x, y, None).unwrap();
    assert!((f.slope + 0.75).abs() < 1e-12);
    assert!(!f.flagged);
}

#[test]
fn dispersive_rejects_times_past_wraparound() {
    let mut cfg = DispersiveConfig::for_dim(1);
    cfg.points_per_axis = 64;
    cfg.box_scale = 4.0;
    cfg.times = Some(vec![1.0, 2.0, 100.0]);
    assert!(matches!(dispersive_experiment(&cfg), Err(Error::FidelityWindow { .. })));
}

#[test]
fn dispersive_one_dimension_does_not_decay() {
    let mut cfg = DispersiveConfig::for_dim(1);
    cfg.points_per_axis = 256;
    cfg.box_scale = 32.0;
    let r = dispersive_experiment(&cfg).unwrap();
    assert!(r.fit.slope.abs() < 0.1, "slope {}", r.fit.slope);
    assert!(r.t_max / r.t_min >= 10.0);
}

#[test]
fn dispersive_two_dimensions_decays_like_inverse_root() {
    let mut cfg = DispersiveConfig::for_dim(2);
    cfg.points_per_axis = 128;
    cfg.box_scale = 16.0;
    cfg.samples = 12;
    let r = dispersive_experiment(&cfg).unwrap();
    assert!((r.fit.slope + 0.5).abs() < 0.15, "slope {}", r.fit.slope);
}

#[test]
fn packet_is_energy_normalized() {
    let p = Packet::new(2, 32, 8.0, 0.25, [1.0, 0.0, 0.0], 1e-2).unwrap();
    let g = p.grid;
    let u0 = Field::from_spectrum(g, p.profile.clone()).unwrap();
    let u1 = Field::from_spectrum(g, p.spectrum_at(0.0, |_, w| Complex64::new(0.0, -w))).unwrap();
    // modulated state has gamma norm 1: the carrier shift is exact on the spectrum
    let e: f64 = (0..g.len())
        .map(|i| {
            let eta = g.frequency(i);
            let xi = [1.0 + eta[0], eta[1], 0.0];
            u0.spectrum()[i].norm_sqr() * norm(&xi).powi(2) + u1.spectrum()[i].norm_sqr()
        })
        .sum::<f64>()
        * g.box_measure();
    assert!((e - 1.0).abs() < 1e-12);
}

#[test]
fn packet_rejects_unresolved_h() {
    assert!(Packet::new(3, 16, 16.0, 0.25, [1.0, 0.0, 0.0], 1e-2).is_err());
    let mut cfg = StrichartzConfig::default();
    cfg.h_ladder = vec![1.5];
    assert!(strichartz_h_experiment(&cfg).is_err());
}

#[test]
fn packet_norm_matches_direct_time_sampling() {
    // demodulated modulus equals the modulus of the full modulated wave on a grid holding the carrier
    let h = 0.5;
    let p = Packet::new(1, 64, 8.0, h, [1.0, 0.0, 0.0], 1e-2).unwrap();
    let g = p.grid;
    let full = Grid::new(1, 256, g.box_scale()).unwrap();
    let shift = (1.0 * g.box_scale()).round() as i64;
    let mut spec = vec![Complex64::new(0.0, 0.0); full.len()];
    let mut om = vec![0.0; full.len()];
    for i in 0..g.len() {
        let k = g.wavenumber(i) + shift;
        let j = full.index_of_wavenumber(k).unwrap();
        spec[j] = p.profile[i];
        om[j] = p.omega[i];
    }
    for &t in &[0.0, 1.0, 7.5] {
        let a = Field::from_spectrum(g, phase_rotate(&p.profile, &p.omega, t)).unwrap();
        let b = Field::from_spectrum(full, phase_rotate(&spec, &om, t)).unwrap();
        let peak = b.max_abs();
        for j in 0..g.len() {
            let d = a.samples()[j].norm() - b.samples()[4 * j].norm();
            assert!(d.abs() < 1e-12 * peak, "t={t} j={j}: {d}");
        }
    }
}

#[test]
fn strichartz_full_ring_ratio_is_finite() {
    // h equal to the ring width: the localized run reduces to the plain ring estimate
    let mut cfg = StrichartzConfig {
        dim: 2,
        points_per_axis: 32,
        box_factor: 8.0,
        h_ladder: vec![0.5, 0.25, 0.125],
        samples: 16,
        horizon: 50.0,
        ..Default::default()
    };
    cfg.carrier = [1.0, 0.0, 0.0];
    let r = strichartz_h_experiment(&cfg).unwrap();
    for p in &r.points {
        assert!(p.norm.is_finite() && p.norm > 0.0);
    }
    let ratio = r.points[0].norm / r.points[1].norm;
    assert!(ratio.is_finite() && ratio > 1.0);
}

#[test]
fn frequency_scaling_zero_data_gives_zero_norm() {
    let g = Grid::new(2, 16, 1.0).unwrap();
    let s = WaveState::new(Field::zeros(g), Field::zeros(g), 0.0).unwrap();
    assert_eq!(derivative_strichartz_norm(&s, &[0.0, 0.5, 1.0]), 0.0);
}

#[test]
fn frequency_scaling_doubling_t_grows_subpolynomially() {
    let cfg = FrequencyScalingConfig {
        dim: 2,
        points_per_axis: 64,
        box_factor: 8.0,
        q_ladder: vec![2],
        samples: 16,
        ..Default::default()
    };
    let a = frequency_scaling_point(&cfg, 2, 0.25).unwrap().norm;
    let b = frequency_scaling_point(&cfg, 2, 0.5).unwrap().norm;
    // L^2_T norm of a decaying sup grows at most like sqrt(2) under doubling
    assert!(b >= a && b / a <= 2f64.sqrt() + 1e-12, "{a} -> {b}");
}

#[test]
fn derivative_spectra_match_evolution() {
    let s = random_state(2, 16, 3);
    let t = 0.7;
    let e = evolve_free(&s, t);
    let d = derivative_spectra(&s, t);
    let ut = Field::from_spectrum(*s.grid(), d[0].clone()).unwrap();
    assert!(ut.relative_distance(&e.velocity) < 1e-12);
    let ux = Field::from_spectrum(*s.grid(), d[1].clone()).unwrap();
    assert!(ux.relative_distance(&e.position.derivative(0)) < 1e-12);
}

fn small_interaction(same_side: bool) -> InteractionConfig {
    InteractionConfig {
        dim: 2,
        points_per_axis: 32,
        box_factor: 8.0,
        h_ladder: vec![0.5, 0.25, 0.125],
        horizon: 40.0,
        samples: 12,
        same_side,
        ..Default::default()
    }
}

#[test]
fn interaction_partition_identity_holds() {
    let r = interaction_experiment(&small_interaction(false)).unwrap();
    assert!(r.max_identity_error < 1e-10, "{}", r.max_identity_error);
    for p in &r.points {
        assert!(p.pieces > 1);
        assert!(p.norm > 0.0 && p.norm <= p.unlocalized_norm * (1.0 + 1e-9));
    }
}

#[test]
fn interaction_vanishes_for_same_side_waves() {
    let r = interaction_experiment(&small_interaction(true)).unwrap();
    for p in &r.points {
        assert!(p.norm < 1e-10 * p.unlocalized_norm, "{} vs {}", p.norm, p.unlocalized_norm);
    }
}

#[test]
fn localized_product_is_unlocalized_for_huge_h() {
    let g = Grid::new(2, 16, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mk = |rng: &mut ChaCha8Rng| {
        let u = Field::random_band_limited(g, 3.0, false, rng).real_part();
        let v = Field::random_band_limited(g, 3.0, false, rng).real_part();
        WaveState::new(u, v, 0.0).unwrap()
    };
    let (v1, v2) = (mk(&mut rng), mk(&mut rng));
    let times = [0.0, 0.25, 0.5, 1.0];
    let sec = [Derivative::Time, Derivative::X1];
    let reach = 2.0 * 3.0 * 2f64.sqrt();
    // chi == 1 on |zeta| <= 0.75 * radius, so chi(D/h) is the identity once 0.75 h >= product band
    let big = localized_product_norm(&v1, &v2, sec, Derivative::Time, 2.0 * reach, 1.0, &times).unwrap();
    let huge = localized_product_norm(&v1, &v2, sec, Derivative::Time, 1e6, 1.0, &times).unwrap();
    assert!((big - huge).abs() <= 1e-12 * huge);
    // direct oracle: pointwise product of the evolved derivatives
    let mut vals = vec![];
    for &t in &times {
        let a = evolve_free(&v1, t);
        let b = evolve_free(&v2, t);
        let d2 = a.velocity.derivative(0);
        let p = d2.mul(&b.velocity);
        vals.push(p.max_abs());
    }
    let direct = trapezoid(&times, &vals);
    // the padded product sup samples a finer grid so it is never smaller
    assert!(huge >= direct * (1.0 - 1e-12) && huge <= direct * 1.2, "{huge} vs {direct}");
}

use crate::grid::trapezoid;
