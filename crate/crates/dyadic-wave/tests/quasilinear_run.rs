//! A full small-data run of the truncated iteration, checked end to end.

use dyadic_wave::quasilinear::*;

fn run_with(cfg: &SchemeConfig) -> (SchemeRun, Vec<ScaleReport>) {
    let data = smooth_data(cfg.grid().unwrap(), 6.0, 0.02, 7).unwrap();
    let law = PolynomialLaw::standard(1.0, 0.5);
    let run = iterate_scheme(&data, &law, cfg).unwrap();
    let scales = analyze_scales(&run, &[3, 4, 5, 6]).unwrap();
    (run, scales)
}

#[test]
fn small_data_run_contracts_glues_and_is_step_stable() {
    let cfg = SchemeConfig::default();
    let (run, scales) = run_with(&cfg);

    let ratios = run.trace.ratios();
    assert!(ratios.iter().skip(3).all(|r| *r <= 0.5), "{ratios:?}");
    let last = run.trace.differences().last().copied().unwrap();
    assert!(last < 1e-6 * run.strichartz.max(run.energy), "{last}");

    let law = PolynomialLaw::standard(1.0, 0.5);
    let oracle = oracle_error(&run, &law, 2).unwrap();
    assert!(oracle < 1e-3, "{oracle}");

    let energy = energy_monitor(&run.solution, &run.metric, cfg.s).unwrap();
    assert!(!energy.flagged && energy.constant.is_finite());

    for s in &scales {
        // the per-interval norms square-sum to the global one, which the envelope dominates
        let global = s.local_norms.iter().map(|m| m * m).sum::<f64>().sqrt();
        assert!((s.glue.global - global).abs() <= 1e-12 * global);
        assert!(s.glue.ratio >= 1.0, "q = {}: {}", s.q, s.glue.ratio);
        assert!(s.partition.count() >= length_only_count(s.q, cfg.horizon, cfg.delta, cfg.eps));
    }

    // halving the time step leaves the remainder coefficients essentially unchanged
    let (fine_run, fine) = run_with(&SchemeConfig { max_dt: Some(0.5 * run.dt), ..cfg.clone() });
    assert!(fine_run.steps >= 2 * run.steps - 1);
    let (a, b) = (coefficient_l2(&scales), coefficient_l2(&fine));
    assert!(a.is_finite() && a > 0.0);
    assert!((a - b).abs() <= 0.1 * a, "{a} vs {b}");
}
