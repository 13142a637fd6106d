use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_convexpoly"));
    c.env_remove("CONVEXPOLY_SEED").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn lebesgue(dir: &Path, l: f64, u: f64) -> String {
    let m = format!(r#"{{"atoms":[],"pieces":[{{"interval":[{l},{u}],"density":[1]}}],"positive":true}}"#);
    write(dir, &format!("leb_{l}_{u}.json"), &m)
        .to_str()
        .unwrap()
        .to_string()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (
        header,
        lines.map(|l| l.split(',').map(String::from).collect()).collect(),
    )
}

fn is_17_digits(cell: &str) -> bool {
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
    mantissa.chars().filter(|c| c.is_ascii_digit()).count() == 17
}

#[test]
fn approximate_uniform_ladder() {
    let o = run(&[
        "approximate",
        "--target",
        "abs(x+2)",
        "--interval",
        "-3,-1.5",
        "--mode",
        "uniform",
        "--degrees",
        "10,20",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["degree", "error", "iterations", "gap"]);
    assert_eq!(rows.len(), 2);
    let e: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(e[1] <= e[0]);
    assert!(is_17_digits(&rows[0][1]));
}

#[test]
fn approximate_writes_side_files() {
    let dir = TempDir::new().unwrap();
    let curve = dir.path().join("curve.csv");
    let report = dir.path().join("report.json");
    let o = run(&[
        "approximate",
        "--target",
        "exp(x - 1)",
        "--interval",
        "-3,-2",
        "--degrees",
        "2,4",
        "--grid",
        "65",
        "--residual-curve",
        curve.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&std::fs::read_to_string(&curve).unwrap());
    assert_eq!(header, ["x", "target", "approximation", "residual"]);
    assert_eq!(rows.len(), 65);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["mode"], "l2");
    assert_eq!(r["results"].as_array().unwrap().len(), 2);
}

#[test]
fn peak_reports_degree_four() {
    let dir = TempDir::new().unwrap();
    let curve = dir.path().join("peak.csv");
    let o = run(&[
        "peak",
        "--a",
        "-3",
        "--x0",
        "-2",
        "--emit-curve",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["polynomial"]["n"], 4);
    assert!(v["polynomial"]["peak_value"].as_f64().unwrap() > 1.0);
    let checks = v["report"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    assert!(checks.iter().all(|c| c["status"] == "Pass"));
    let (header, rows) = csv_rows(&std::fs::read_to_string(&curve).unwrap());
    assert_eq!(header, ["x", "p"]);
    assert_eq!(rows.len(), 1001);
}

#[test]
fn usage_and_domain_exit_codes() {
    let o = run(&["moments", "--max-n", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--measure"));

    let o = run(&[
        "approximate",
        "--target",
        "x ^ 1.5",
        "--interval",
        "-3,-2",
        "--degrees",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 4"));

    let o = run(&["peak", "--a", "-3", "--x0", "0.5"]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["moments", "--measure", "/nonexistent/m.json", "--max-n", "3"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["approximate", "--target", "x", "--interval", "-1,-2", "--degrees", "3"]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn poly_round_trip() {
    let o = run(&[
        "poly",
        "mul",
        "--p",
        r#"{"coeffs":[0.5,0.5]}"#,
        "--q",
        r#"{"coeffs":[0.5,0.5]}"#,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let c: Vec<f64> = serde_json::from_value(v["coeffs"].clone()).unwrap();
    assert_eq!(c, vec![0.25, 0.5, 0.25]);

    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", &stdout(&o));
    let o = run(&[
        "poly",
        "compose",
        "--p",
        p.to_str().unwrap(),
        "--q",
        r#"{"coeffs":[0,1]}"#,
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 3);

    let o = run(&["poly", "eval", "--poly", p.to_str().unwrap(), "--x", "-1,2"]);
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["x", "value", "sign", "log_magnitude"]);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), 2.25);

    let o = run(&[
        "poly",
        "mul",
        "--p",
        r#"{"coeffs":[0.5,0.6]}"#,
        "--q",
        r#"{"coeffs":[1]}"#,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn moments_and_certificate() {
    let dir = TempDir::new().unwrap();
    let m = lebesgue(dir.path(), -2.0, -1.0);
    let o = run(&["moments", "--measure", &m, "--max-n", "4"]);
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["n", "value", "sign", "log_magnitude"]);
    assert_eq!(rows.len(), 5);
    let m2: f64 = rows[2][1].parse().unwrap();
    assert!((m2 - 7.0 / 3.0).abs() < 1e-12);

    let o = run(&["certify", "--measure", &m, "--max-n", "60"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "Certificate");
    let rate = v["m"].as_f64().unwrap();
    assert!((1.8..=2.0).contains(&rate));

    let o = run(&["moments", "--measure", &m, "--max-n", "2", "--weight", "abs(x)"]);
    let (_, rows) = csv_rows(&stdout(&o));
    let w0: f64 = rows[0][1].parse().unwrap();
    assert!((w0 - 1.5).abs() < 1e-10);
}

#[test]
fn series_commands() {
    let o = run(&["series", "--kind", "resolvent", "--param", "2", "--truncate", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 6);

    let dir = TempDir::new().unwrap();
    let mut csv = String::from("x,y\n");
    for i in 0..50 {
        let x = i as f64 / 49.0;
        csv.push_str(&format!("{x},{}\n", (x - 1.0).exp()));
    }
    let s = write(dir.path(), "s.csv", &csv);
    let o = run(&["series", "fit", "--samples", s.to_str().unwrap(), "--degree", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "RepresentationConsistent");

    assert_eq!(
        run(&["series", "--kind", "resolvent", "--truncate", "5"]).status.code(),
        Some(2)
    );
}

#[test]
fn cyclic_and_seed_override() {
    let dir = TempDir::new().unwrap();
    let m = lebesgue(dir.path(), -2.0, -1.2);
    let args = [
        "cyclic",
        "--measure",
        &m,
        "--max-n",
        "60",
        "--trials",
        "4",
        "--seed",
        "1",
    ];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["status"], "CyclicConsistent");
    assert_eq!(v["certificates"].as_array().unwrap().len(), 4);

    // Byte-identical reruns; the environment seed wins over --seed.
    assert_eq!(stdout(&run(&args)), stdout(&a));
    let env = bin().args(args).env("CONVEXPOLY_SEED", "2").output().unwrap();
    let v: Value = serde_json::from_str(&stdout(&env)).unwrap();
    assert_eq!(v["seed"], 2);
    let flag = run(&[
        "cyclic",
        "--measure",
        &m,
        "--max-n",
        "60",
        "--trials",
        "4",
        "--seed",
        "2",
    ]);
    assert_eq!(stdout(&env), stdout(&flag));

    let m = lebesgue(dir.path(), -2.0, 0.0);
    let v: Value = serde_json::from_str(&stdout(&run(&["cyclic", "--measure", &m, "--vector", "x"]))).unwrap();
    assert_eq!(v["status"], "NotCyclic");

    let bad = bin()
        .args(["cyclic", "--measure", &m])
        .env("CONVEXPOLY_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn invariant_set_report() {
    let dir = TempDir::new().unwrap();
    let m = lebesgue(dir.path(), -0.5, 0.5);
    for set in ["A", "B"] {
        let o = run(&["invariant-set", "--measure", &m, "--set", set]);
        assert_eq!(o.status.code(), Some(0));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["invariant"], true);
        assert_eq!(v["trivial"], false);
        assert!(v["witness"].is_object());
    }
    let o = bin()
        .args(["invariant-set", "--measure", &m, "--set", "C"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_flag_writes_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.json");
    let o = run(&[
        "series",
        "--kind",
        "exp",
        "--truncate",
        "3",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 4);
}
