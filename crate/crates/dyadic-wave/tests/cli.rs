use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dyadic-wave"));
    c.env_remove("DYADIC_WAVE_THREADS");
    c
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{ "experiment": "paraproduct", "seed": 3, "params": { "pairs": 4 } }"#;

#[test]
fn list_names_every_experiment() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in dyadic_wave::lab::experiment_names() {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), SMALL);
    let out = bin().args(["validate", "--config"]).arg(&good).output().unwrap();
    assert!(out.status.success());
    let resolved: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resolved["params"]["points_per_axis"], 32);
    assert_eq!(resolved["tolerances"]["reconstruction"], 1e-12);

    let bad = write_config(dir.path(), r#"{ "experiment": "paraproduct", "params": { "pairs": -1 } }"#);
    let out = bin().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_identical_tables_and_a_complete_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut tables = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("out{k}"));
        let out = bin().args(["run", "paraproduct", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(std::fs::read(out_dir.join("paraproduct.csv")).unwrap());
        let report: Value = serde_json::from_slice(&std::fs::read(out_dir.join("paraproduct.json")).unwrap()).unwrap();
        for key in ["experiment", "config_hash", "seed", "measurements_file", "fits", "checks", "pass"] {
            assert!(report.get(key).is_some(), "report lacks {key}");
        }
        assert_eq!(report["seed"], 3);
        assert_eq!(report["pass"], true);
    }
    assert_eq!(tables[0], tables[1]);
    let header = String::from_utf8(tables[0].clone()).unwrap();
    assert!(header.starts_with("pair,reconstruction_error,max_leakage,partition_residual,orthogonality_ratio\n"));
}

#[test]
fn failed_checks_set_the_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "params": { "pairs": 2 }, "tolerances": { "orthogonality_low": 2.0 } }"#,
    );
    let out = bin().args(["run", "paraproduct", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL orthogonality_ratio_min"));
}

#[test]
fn unknown_experiment_is_an_error_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().args(["run", "no-such-experiment", "--out"]).arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));
    assert!(!out_dir.exists());
}

#[test]
fn config_for_another_experiment_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = bin().args(["run", "disp-decay", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn environment_overrides_thread_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = bin()
        .env("DYADIC_WAVE_THREADS", "1")
        .args(["run", "paraproduct", "--threads", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("paraproduct.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["threads"], 1);

    let out = bin()
        .env("DYADIC_WAVE_THREADS", "zero")
        .args(["run", "paraproduct", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
