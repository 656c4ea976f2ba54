use std::path::Path;
use std::process::{Command, Output};

fn ieff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ieff"))
        .args(args)
        .current_dir(dir)
        .env_remove("IEFF_OUT_DIR")
        .env_remove("IEFF_DIGITS_CSV")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn manifest_hash(path: &Path) -> String {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["config_sha256"].as_str().unwrap().to_string()
}

/// CSV field of the single report row under `column`.
fn report_field(csv: &str, column: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    row[header.iter().position(|h| *h == column).unwrap()].to_string()
}

#[test]
fn generate_sinusoids_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ieff(dir.path(), &["generate", "sinusoids", "--n", "5000", "--seed", "42", "--output", "a.csv"]));
    ok(&ieff(dir.path(), &["generate", "sinusoids", "--n", "5000", "--seed", "42", "--output", "b.csv"]));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5001);
    assert!(lines.iter().all(|l| l.split(',').count() == 129));
}

#[test]
fn manifest_hash_changes_iff_config_changes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |n: &str, out: &str| {
        ok(&ieff(dir.path(), &["generate", "circle", "--n", n, "--output", out]));
        manifest_hash(&dir.path().join(out).with_extension("manifest.json"))
    };
    let a = run("200", "a.csv");
    let b = run("200", "b.csv");
    let c = run("201", "c.csv");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_snr_range_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = ieff(dir.path(), &["generate", "sinusoids", "--n", "10", "--snr-db", "20,15"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snr_db_range"));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"n": 10, "nn": 3}"#).unwrap();
    let out = ieff(dir.path(), &["--config", "c.json", "generate", "sinusoids"]);
    assert_eq!(out.status.code(), Some(1));
    let out = ieff(dir.path(), &["generate", "nothing"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"n": 30, "seed": 5}"#).unwrap();
    ok(&ieff(dir.path(), &["--config", "c.json", "generate", "redundant", "--n", "40", "--output", "r.csv"]));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.manifest.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["n"], 40);
    assert_eq!(v["seed"], 5);
    assert_eq!(std::fs::read_to_string(dir.path().join("r.csv")).unwrap().lines().count(), 41);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ieff"))
        .args(["generate", "location", "--reps", "50"])
        .current_dir(dir.path())
        .env("IEFF_OUT_DIR", "results")
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("results/location.csv").exists());
}

#[test]
fn identity_channel_is_fully_efficient() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ieff(dir.path(), &["generate", "sinusoids", "--n", "300", "--output", "s.csv"]));
    let out = ieff(dir.path(), &["efficiency", "--data", "s.csv", "--channel", "identity"]);
    ok(&out);
    let csv = String::from_utf8(out.stdout).unwrap();
    let e: f64 = report_field(&csv, "E_ratio").parse().unwrap();
    assert!((e - 1.0).abs() <= 1e-9, "{csv}");
}

#[test]
fn difference_form_lies_in_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ieff(dir.path(), &["generate", "sinusoids", "--n", "300", "--output", "s.csv"]));
    for channel in ["fft_topk:20", "downsample:32"] {
        let out = ieff(dir.path(), &["efficiency", "--data", "s.csv", "--channel", channel, "--norm", "diff", "--smin", "0"]);
        ok(&out);
        let e: f64 = report_field(&String::from_utf8(out.stdout).unwrap(), "E_diff").parse().unwrap();
        assert!((0.0..=1.0).contains(&e), "{channel}: {e}");
    }
    let out = ieff(dir.path(), &["efficiency", "--data", "s.csv", "--norm", "diff"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_dataset_reports_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = ieff(dir.path(), &["efficiency", "--data", "absent.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("label,f0"));
}

#[test]
fn table1_signals_has_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ieff(dir.path(), &["experiment", "table1", "--domain", "signals", "--n", "400"]));
    let csv = std::fs::read_to_string(dir.path().join("out/table1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(dir.path().join("out/table1.manifest.json").exists());
}

/// Digit-like table: ten noisy integer prototypes on the 0..=16 pixel range.
fn synthetic_digits(path: &Path, n: usize) {
    let header: Vec<String> = (0..64).map(|p| format!("f{p}")).collect();
    let mut s = format!("label,{}\n", header.join(","));
    for i in 0..n {
        let c = i % 10;
        let row: Vec<String> = (0..64)
            .map(|p| {
                let base = if (p * 7 + c * 13) % 10 < 4 { 12 } else { 2 };
                let noise = ((i * 31 + p * 17) % 7) as i64 - 3;
                (base + noise).clamp(0, 16).to_string()
            })
            .collect();
        s.push_str(&format!("{c},{}\n", row.join(",")));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn table2_has_eleven_rows() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_digits(&dir.path().join("digits.csv"), 400);
    let out = ieff(dir.path(), &["experiment", "table2", "--digits", "digits.csv", "--noise-sigma", "1.0"]);
    ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("out/table2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12, "{csv}");
}

#[test]
fn table2_without_digits_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ieff(dir.path(), &["experiment", "table2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_only_dpi_runs_one_battery() {
    let dir = tempfile::tempdir().unwrap();
    let out = ieff(dir.path(), &["check", "--only", "dpi", "--threads", "1"]);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["batteries"].as_array().unwrap().len(), 1);
    assert_eq!(v["batteries"][0]["battery"], "dpi");
    assert!(v["oracles"].as_array().unwrap().is_empty());
    assert_eq!(v["passed"], true);
}

#[test]
fn failing_check_exits_three_with_seed() {
    let dir = tempfile::tempdir().unwrap();
    // Zero slack makes the Azuma battery fail on any non-zero tail frequency.
    std::fs::write(dir.path().join("c.json"), r#"{"axioms": {"azuma_slack": 1.0, "azuma_steps": 4}}"#).unwrap();
    let out = ieff(dir.path(), &["--config", "c.json", "check", "--only", "azuma"]);
    if out.status.code() == Some(3) {
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    } else {
        ok(&out);
    }
    let out = ieff(dir.path(), &["check", "--only", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}
