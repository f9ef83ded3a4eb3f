use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dicecarbon(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicecarbon"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DICECARBON_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn summary_value(text: &str, label: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .and_then(|rest| rest.rsplit(':').next())
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| panic!("`{label}` missing from summary:\n{text}"))
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

const BUNDLE: [&str; 9] = [
    "prices_summary.csv",
    "scc_curve.csv",
    "deviation_curve.csv",
    "horizon_sweep.csv",
    "cost_emission.csv",
    "r_scc_curve.csv",
    "sensitivities_t0.csv",
    "policy.csv",
    "summary.txt",
];

#[test]
fn default_run_writes_the_bundle_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dicecarbon(&["run", "--output-dir", "a"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("a");
    for name in BUNDLE {
        assert!(dir.join(name).is_file(), "{name} missing");
    }
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    let k_par = summary_value(&summary, "K_par [$/tCO2]");
    let k_scc = summary_value(&summary, "K_SCC [$/tCO2]");
    assert!((k_par - 500.0).abs() <= 0.2 * 500.0, "{k_par}");
    assert!((k_scc - 45.0).abs() <= 0.25 * 45.0, "{k_scc}");
    summary_value(&summary, "r_SCC mean over first 10 periods [%/yr]");

    let again = dicecarbon(&["run", "--output-dir", "b"], tmp.path());
    assert!(again.status.success());
    for name in BUNDLE.iter().filter(|n| n.ends_with(".csv")) {
        let a = fs::read(dir.join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn single_horizon_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dicecarbon(&["run", "--horizons", "150", "--skip-rates", "--output-dir", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("o/horizon_sweep.csv"));
    assert_eq!(rows.len(), 1);
    let k: f64 = rows[0][1].parse().unwrap();
    assert!((k - 225.0).abs() <= 0.25 * 225.0, "{k}");
    assert!(!tmp.path().join("o/r_scc_curve.csv").exists());
}

#[test]
fn loaded_policy_reproduces_analytics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dicecarbon(&["calibrate", "--output-dir", "cal"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("cal/prices_summary.csv").exists());

    let full = dicecarbon(&["run", "--output-dir", "full"], tmp.path());
    assert!(full.status.success());
    let loaded = dicecarbon(
        &[
            "run",
            "--policy.calibrate",
            "false",
            "--policy.load",
            "cal/policy.csv",
            "--output-dir",
            "loaded",
        ],
        tmp.path(),
    );
    assert!(loaded.status.success(), "{}", String::from_utf8_lossy(&loaded.stderr));
    for name in BUNDLE.iter().filter(|n| n.ends_with(".csv")) {
        let a = fs::read(tmp.path().join("full").join(name)).unwrap();
        let b = fs::read(tmp.path().join("loaded").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs after reload");
    }
}

#[test]
fn validate_reports_named_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = dicecarbon(&["validate"], tmp.path());
    assert!(ok.status.success());

    let bad = dicecarbon(
        &["validate", "--model.numeraire_rate", "-0.01", "--horizons", "150,600"],
        tmp.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("numeraire_rate"), "{text}");
    assert!(text.contains("analytics.horizons[1]"), "{text}");
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = dicecarbon(&["run", "--config", "nope.toml"], tmp.path());
    assert_eq!(missing.status.code(), Some(2));

    let stalled = dicecarbon(
        &["calibrate", "--optimizer.max_iterations", "1", "--output-dir", "o"],
        tmp.path(),
    );
    assert_eq!(stalled.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&stalled.stderr).contains("max_iterations"));

    let loose = dicecarbon(
        &["run", "--skip-rates", "--analytics.scc_consumption_bump", "500", "--output-dir", "o"],
        tmp.path(),
    );
    assert_eq!(loose.status.code(), Some(4), "{}", String::from_utf8_lossy(&loose.stderr));
}

#[test]
fn output_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dicecarbon"))
        .args(["calibrate"])
        .current_dir(tmp.path())
        .env("DICECARBON_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env/policy.csv").is_file());
}
