use super::*;
use serde_json::json;

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn registry_lists_every_experiment_once() {
    let names = experiment_names();
    assert_eq!(names.len(), 10);
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
    for e in experiments() {
        assert!(!e.columns.is_empty(), "{}", e.name);
    }
}

#[test]
fn unknown_experiment_writes_nothing() {
    let dir = scratch();
    let out = dir.path().join("out");
    let cfg = ExperimentConfig { out_dir: Some(out.clone()), ..ExperimentConfig::new("no-such-thing") };
    assert!(matches!(run_experiment(&cfg), Err(Error::UnknownExperiment(_))));
    assert!(!out.exists());
}

#[test]
fn schema_violations_are_rejected() {
    let bad_key = ExperimentConfig::new("paraproduct").with_params(json!({ "pairz": 3 }));
    assert!(matches!(validate_config(&bad_key), Err(Error::Config(_))));
    let bad_type = ExperimentConfig::new("paraproduct").with_params(json!({ "pairs": "many" }));
    assert!(validate_config(&bad_type).is_err());
    let bad_tol = ExperimentConfig::new("paraproduct").with_tolerances(json!({ "leak": 1.0 }));
    assert!(validate_config(&bad_tol).is_err());
    let not_object = ExperimentConfig::new("paraproduct").with_params(json!([1, 2]));
    assert!(validate_config(&not_object).is_err());
    let unknown_top: std::result::Result<ExperimentConfig, _> = serde_json::from_value(json!({ "experiment": "x", "sed": 1 }));
    assert!(unknown_top.is_err());
}

#[test]
fn validation_fills_defaults() {
    let cfg = validate_config(&ExperimentConfig::new("disp-decay").with_params(json!({ "dim": 2 }))).unwrap();
    assert_eq!(cfg.params["points_per_axis"], json!(256));
    assert_eq!(cfg.params["box_scale"], json!(32.0));
    assert_eq!(cfg.tolerances["slope"], json!(0.15));
    // resolving twice changes nothing
    assert_eq!(validate_config(&cfg).unwrap(), cfg);
}

#[test]
fn hash_ignores_output_location_only() {
    let a = ExperimentConfig::new("paraproduct");
    let b = ExperimentConfig { out_dir: Some("/tmp/x".into()), threads: Some(1), ..a.clone() };
    assert_eq!(a.hash(), b.hash());
    let c = ExperimentConfig { seed: 1, ..a.clone() };
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn csv_rendering() {
    let mut t = Table::new(&["a", "b", "c"]);
    t.push(vec![3usize.into(), 0.1.into(), "x,y".into()]);
    t.push(vec![(-2i32).into(), f64::NAN.into(), true.into()]);
    assert_eq!(t.to_csv(), "a,b,c\n3,1e-1,\"x,y\"\n-2,NaN,true\n");
}

#[test]
fn checks_name_their_tolerance() {
    let c = Check::new("x", 0.3, Some(0.0), Some(0.5), "slope", ToleranceSource::Default);
    assert!(c.pass);
    assert!(!Check::new("x", f64::NAN, None, Some(1.0), "k", ToleranceSource::Config).pass);
    assert!(!Check::new("x", 2.0, Some(2.5), None, "k", ToleranceSource::Config).pass);
    assert!(c.describe().contains("slope"));
}

#[test]
fn paraproduct_run_is_deterministic_and_self_describing() {
    let dir = scratch();
    let cfg = ExperimentConfig {
        out_dir: Some(dir.path().to_path_buf()),
        seed: 5,
        threads: Some(1),
        ..ExperimentConfig::new("paraproduct").with_params(json!({ "pairs": 6 }))
    };
    let r = run_experiment(&cfg).unwrap();
    assert!(r.pass, "{:?}", r.checks);
    assert!(r.checks.iter().all(|c| c.source == ToleranceSource::Default));
    let first = std::fs::read(dir.path().join("paraproduct.csv")).unwrap();
    let json: Report = serde_json::from_slice(&std::fs::read(dir.path().join("paraproduct.json")).unwrap()).unwrap();
    assert_eq!(json.measurements_file.as_deref(), Some("paraproduct.csv"));
    assert_eq!(json.config_hash, r.config_hash);
    assert_eq!(first.iter().filter(|b| **b == b'\n').count(), 7);
    // rerun from the provenance block alone
    let again = run_experiment(&json.provenance.config).unwrap();
    assert_eq!(std::fs::read(dir.path().join("paraproduct.csv")).unwrap(), first);
    assert_eq!(again.config_hash, r.config_hash);
    assert_eq!(again.checks, r.checks);
}

#[test]
fn configured_tolerances_are_marked() {
    let cfg = ExperimentConfig::new("paraproduct")
        .with_params(json!({ "pairs": 2 }))
        .with_tolerances(json!({ "reconstruction": 1e-30 }));
    let r = run_experiment(&cfg).unwrap();
    let c = r.checks.iter().find(|c| c.tolerance == "reconstruction").unwrap();
    assert_eq!(c.source, ToleranceSource::Config);
    assert!(!r.pass || c.value == 0.0);
}
