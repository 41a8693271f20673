use std::process::Command;

fn mfirl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfirl"))
}

#[test]
fn eig_prints_open_and_closed_loop_spectra() {
    let out = mfirl().args(["eig", "--gain=-15.9517,-4.0410,-4.9822"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("-5.0000-3.1623i"));
    assert!(text.contains("-2.2139+0.0000i"));
    assert!(text.contains("-6.3842+5.5943i"));
}

#[test]
fn eig_rejects_a_wrong_sized_gain() {
    let out = mfirl().args(["eig", "--gain=1,2"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn run_writes_artifacts_for_a_short_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, "[run]\nhorizon = 0.5\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = mfirl()
        .args(["run", "-c", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["final_time_s"].as_f64().unwrap(), 0.5);
    for name in ["trajectory.csv", "weights.csv", "summary.json"] {
        assert!(out_dir.join(name).is_file());
    }
}

#[test]
fn oracle_check_reports_the_riccati_gain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, "[run]\nhorizon = 0.5\n").unwrap();
    let out = mfirl().args(["oracle-check", "-c", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let gain: Vec<f64> = report["oracle_gain"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let expected = [-2.238939, -0.589661, -1.516018];
    for (g, e) in gain.iter().zip(expected) {
        assert!((g - e).abs() < 1e-5, "{gain:?}");
    }
    assert!(report["gain_formula_mismatch"].as_f64().unwrap() < 1e-10);
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[learning]\nsigma_c = 3.0\n").unwrap();
    let out = mfirl().args(["run", "-c", cfg.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma_c"));
}
