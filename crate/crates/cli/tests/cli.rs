use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shiftquant"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn simulate(dir: &Path, seed: &str) {
    let out = run(&["simulate", "--example", "ex1", "--n", "100", "--seed", seed, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn self_comparison_has_zero_shift() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "5");
    let s1 = dir.path().join("series1.csv");
    let report = dir.path().join("r.json");
    let out = run(&["sit", s1.to_str().unwrap(), s1.to_str().unwrap(), "--boot", "200", "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&report);
    let r = &v["runs"][0];
    assert_eq!(r["shift"]["d_hat"].as_f64().unwrap(), 0.0);
    assert!(r["p_value"].as_f64().unwrap() >= 0.5);
    assert_eq!(r["decisions"][0]["reject"], false);
}

#[test]
fn invalid_tau_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "1");
    let s1 = dir.path().join("series1.csv");
    let s2 = dir.path().join("series2.csv");
    let report = dir.path().join("out").join("r.json");
    let out = run(&["sit", s1.to_str().unwrap(), s2.to_str().unwrap(), "--tau", "1.2", "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_file_exits_one() {
    let out = run(&["sit", "/nonexistent/a.csv", "/nonexistent/b.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cli/read"));
}

#[test]
fn degenerate_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    let text = "y\n".to_string() + &"1\n".repeat(60);
    std::fs::write(&flat, text).unwrap();
    let f = flat.to_str().unwrap();
    let out = run(&["sit", f, f, "--boot", "50"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2");
    let s1 = dir.path().join("series1.csv");
    let s2 = dir.path().join("series2.csv");
    let go = |name: &str| {
        let p = dir.path().join(name);
        let out = run(&["scb", s1.to_str().unwrap(), s2.to_str().unwrap(), "--boot", "100", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        p
    };
    let a = go("a.json");
    let b = go("b.json");
    let strip = |p: &Path| std::fs::read_to_string(p).unwrap().replace("a_band", "X").replace("b_band", "X");
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(
        std::fs::read(dir.path().join("a_band_tau0.5.csv")).unwrap(),
        std::fs::read(dir.path().join("b_band_tau0.5.csv")).unwrap()
    );
}

#[test]
fn zero_inside_matches_band_file() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "4");
    let s1 = dir.path().join("series1.csv");
    let s2 = dir.path().join("series2.csv");
    let report = dir.path().join("scb.json");
    let out = run(&["scb", s1.to_str().unwrap(), s2.to_str().unwrap(), "--boot", "200", "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&report);
    let band = &v["runs"][0]["band"];
    let csv = std::fs::read_to_string(dir.path().join(band["band_csv"].as_str().unwrap())).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,center,lo,hi"));
    let inside = lines.all(|l| {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        v[2] <= 0.0 && 0.0 <= v[3]
    });
    assert_eq!(band["zero_inside"].as_bool().unwrap(), inside);
}

#[test]
fn multi_tau_and_alpha_report() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "6");
    let s1 = dir.path().join("series1.csv");
    let s2 = dir.path().join("series2.csv");
    let out = run(&[
        "sit", s1.to_str().unwrap(), s2.to_str().unwrap(), "--boot", "100",
        "--tau", "0.4", "--tau", "0.6", "--alpha", "0.05", "--alpha", "0.1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[1]["tau"].as_f64(), Some(0.6));
    assert_eq!(runs[0]["decisions"].as_array().unwrap().len(), 2);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn fit_and_mc_table_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "7");
    let s1 = dir.path().join("series1.csv");
    let out = run(&["fit", s1.to_str().unwrap(), "--out", dir.path().join("fit").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(dir.path().join("fit").join("curve_tau0.5.csv")).unwrap();
    assert!(curve.starts_with("t,theta1,theta2,m_hat,u,g_hat,big_g_hat\n"));

    let out = run(&["mc-table", "--reps", "4", "--boot", "50", "--n", "60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("example,n,tau,alpha,mode,dependence,rate,stderr,valid,failed,mean_d_hat"));
    assert!(lines.next().unwrap().starts_with("ex1,60,0.5,0.05,sit,independent,"));
}
