use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn llab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llab"))
        .args(args)
        .current_dir(dir)
        .env("LLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

const SMALL_GRID: &str = r#"{
    "lambda_list": [10],
    "grid": {"min": -1, "max": 2, "count": 5, "var": "t"},
    "n": 200,
    "samples": 12,
    "seed": 7
}"#;

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\"lambda_list\": [10,");
    let o = llab(&["le-grid", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("out").exists());

    let cfg = write(dir.path(), "typo.json", "{\"lambdas\": [10]}");
    let o = llab(&["verify", "derivative", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = llab(&["reproduce", "no-such-figure", "--out", "out"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("thm-main-affine"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_llab"))
        .args(["reproduce", "list"])
        .env("LLAB_THREADS", "many")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_potential_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "steep.json",
        r#"{"potential": {"kind": "smooth-monotone", "params": [0.9], "c_v": 0.1, "C_v": 1.9}}"#,
    );
    let o = llab(&["verify", "derivative", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("out").exists());

    let cfg = write(
        dir.path(),
        "trig.json",
        r#"{"potential": {"kind": "trig-polynomial", "params": [0, 2, 0], "c_v": 0, "C_v": 12.6}}"#,
    );
    let o = llab(&["verify", "critical-points", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn le_grid_is_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "grid.json", SMALL_GRID);
    let a = llab(&["le-grid", "--config", &cfg, "--out", "a"], dir.path());
    let b = llab(&["le-grid", "--config", &cfg, "--out", "b"], dir.path());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    for name in ["le_lambda_10.csv", "summary.json"] {
        let x = fs::read(dir.path().join("a").join(name)).unwrap();
        let y = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let csv = fs::read_to_string(dir.path().join("a/le_lambda_10.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256: "));
    assert_eq!(lines.next().unwrap(), "E,t,lambda,method,n,samples,value,stderr,lower,upper");
    assert_eq!(lines.count(), 5);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/summary.json")).unwrap()).unwrap();
    let s = &summary["report"]["summaries"][0];
    assert_eq!(s["lambda"], 10.0);
    assert!(s["min_le"].as_f64().unwrap() > 0.0);
    assert!(s["fitted_C0"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["config_sha256"].as_str().unwrap().len(), 64);
    assert!(!dir.path().join("a").read_dir().unwrap().any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "grid.json", SMALL_GRID);
    let o = llab(&["le-grid", "--config", &cfg, "--lambda", "5,20", "--epoints", "3", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0);
    for l in ["5", "20"] {
        let csv = fs::read_to_string(dir.path().join(format!("out/le_lambda_{l}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 2 + 3);
    }
    assert!(!dir.path().join("out/le_lambda_10.csv").exists());
}

#[test]
fn derivative_verifier_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.json",
        r#"{"lambda_list": [10], "grid": {"min": -1, "max": 2, "count": 4, "var": "t"}, "samples": 16}"#,
    );
    let o = llab(&["verify", "derivative", "--config", &cfg, "--nmax", "8", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/derivative.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert!(r["report"]["fitted_c"].as_f64().unwrap() > 0.0);
    assert_eq!(r["report"]["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn unreachable_c_target_fails_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.json", r#"{"lambda_list": [10], "grid": {"min": 0.5, "max": 0.5, "count": 1, "var": "t"}}"#);
    let o = llab(&["verify", "derivative", "--config", &cfg, "--nmax", "3", "--c-target", "100", "--out", "out"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(dir.path().join("out/derivative.json").exists());
}

#[test]
fn forced_coarse_grid_surfaces_miscounts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"lambda_list": [10], "grid": {"min": 0.5, "max": 0.5, "count": 1, "var": "t"}}"#);
    let o = llab(&["verify", "critical-points", "--config", &cfg, "--nmax", "5", "--K", "6", "--out", "out"], dir.path());
    assert_eq!(code(&o), 1);
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/critical-points.json")).unwrap()).unwrap();
    assert!(r["report"]["warnings"].as_u64().unwrap() > 0);
    assert!(dir.path().join("out/critical_points.csv").exists());
}

#[test]
fn herman_constant_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "h.json",
        r#"{"lambda_list": [1, 3], "grid": {"min": -2, "max": 2, "count": 3, "var": "e"}}"#,
    );
    let o = llab(&["verify", "herman-constant", "--config", &cfg, "--nmax", "10", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/herman_constant.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 2 * 3 * 10);
}

#[test]
fn reproduce_list_names_every_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let o = llab(&["reproduce", "list"], dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for id in ["thm-main-affine", "lemma-derivative", "appendix-b-floor"] {
        assert!(text.lines().any(|l| l == id), "{id}");
    }
}

#[test]
fn reproduce_writes_frozen_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = llab(&["reproduce", "lemma-derivative", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/derivative.csv").exists());
    assert!(dir.path().join("out/derivative.json").exists());
}
