use std::path::Path;
use std::process::{Command, Output};

fn qbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbm")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small positive-rate scenario that exercises every solver quickly.
const SMALL: &str = r#"
[reservoir]
mode = "high_t"
omega_c = 1e6
alpha2 = 2e-6
alpha2_kt = 2e5

[system]
omega0 = 1e5
n0 = 0

[run]
t_max = 3e-6
points = 31
methods = ["exact", "ode", "secular", "nonsecular", "mcwf", "markov", "short_time"]

[ensemble]
trajectories = 200
seed = 7
"#;

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// Column `name` of a traces CSV as numbers.
fn column(dir: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(dir.join("traces.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let index = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(index).unwrap().parse().unwrap()).collect()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let out = qbm(&["run", "--config", path(&cfg), "--out", path(dir)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for file in ["traces.csv", "coefficients.csv", "report.json"] {
        let a = std::fs::read(dirs[0].join(file)).unwrap();
        let b = std::fs::read(dirs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
    let header = std::fs::read_to_string(dirs[0].join("traces.csv")).unwrap();
    assert!(header.starts_with("t,exact,ode,secular,nonsecular,mcwf,mcwf_stderr,markov,short_time,Delta,gamma,Pi,rshift,regime"));
}

#[test]
fn seed_flag_changes_only_the_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, seed) in [(&a, "7"), (&b, "8")] {
        let out = qbm(&["run", "--config", path(&cfg), "--out", path(dir), "--methods", "exact,mcwf", "--seed", seed]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(column(&a, "exact"), column(&b, "exact"));
    assert_ne!(column(&a, "mcwf"), column(&b, "mcwf"));
}

#[test]
fn fig1_secular_tracks_exact_through_non_lindblad_spans() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qbm(&["run", "--preset", "fig1", "--methods", "exact,secular", "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = report(tmp.path());
    let dev = rep["deviations"][0]["max_relative"].as_f64().unwrap();
    assert!(dev <= 1e-3, "deviation {dev}");
    assert!(rep["regime"]["non_lindblad_fraction"].as_f64().unwrap() > 0.0);
    assert_eq!(rep["regime"]["delta_negative"], true);
    let regimes: Vec<String> = std::fs::read_to_string(tmp.path().join("traces.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    assert!(regimes.iter().any(|r| r == "NL"));
}

#[test]
fn fig2_early_heating_is_quadratic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qbm(&["run", "--preset", "fig2", "--methods", "exact,quadratic", "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let t = column(tmp.path(), "t");
    let exact = column(tmp.path(), "exact");
    let quad = column(tmp.path(), "quadratic");
    // grid spacing is 5 ns, so the first rows lie well inside t < 1/ω_c
    for i in 1..=2 {
        assert!(t[i] < 1.1e-8);
        let ratio = exact[i] / quad[i];
        assert!((ratio - 1.0).abs() <= 0.05, "t = {}: ratio {ratio}", t[i]);
    }
}

#[test]
fn failed_method_aborts_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let out = qbm(&["run", "--preset", "fig1", "--methods", "exact,mcwf", "--out", path(&dir)]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("mcwf"), "{err}");
    assert!(err.contains("negative"), "{err}");
    let written = std::fs::read_dir(&dir).map(|d| d.count()).unwrap_or(0);
    assert_eq!(written, 0);
}

#[test]
fn coeffs_writes_only_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qbm(&["coeffs", "--preset", "fig2", "--t-max", "1e-6", "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("coefficients.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,Delta,gamma,Pi,rshift,regime");
    assert_eq!(text.lines().count(), 602);
    assert!(!tmp.path().join("traces.csv").exists());
}

#[test]
fn validate_reports_parameters() {
    let out = qbm(&["validate", "--preset", "r1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("configuration is valid"));
    assert!(text.contains("r = 1"));
}

#[test]
fn empty_config_lists_missing_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = qbm(&["validate", "--config", path(&cfg)]);
    assert!(!out.status.success());
    let err = stderr(&out);
    for field in ["omega_c", "omega0", "t_max"] {
        assert!(err.contains(field), "{field} missing from: {err}");
    }
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "preset = \"fig1\"\n\n[system]\nomega_zero = 1e7\n").unwrap();
    let out = qbm(&["validate", "--config", path(&cfg)]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("omega_zero"), "{err}");
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn missing_source_is_a_usage_error() {
    let out = qbm(&["run"]);
    assert_eq!(out.status.code(), Some(2));
}
