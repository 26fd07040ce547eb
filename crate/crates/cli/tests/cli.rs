//! End-to-end runs of the `funcgp` binary on small meshes.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn funcgp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funcgp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .find(|l| l.starts_with(key))
        .unwrap_or_else(|| panic!("no {key} in output:\n{text}"));
    line[key.len()..].trim().parse().unwrap()
}

/// Columns of a points CSV keyed by header name.
fn read_points(path: &Path) -> Vec<(String, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let names: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for rec in r.records() {
        for (c, v) in cols.iter_mut().zip(rec.unwrap().iter()) {
            c.push(v.parse().unwrap());
        }
    }
    names.into_iter().zip(cols).collect()
}

fn column<'a>(cols: &'a [(String, Vec<f64>)], name: &str) -> &'a [f64] {
    &cols.iter().find(|(n, _)| n == name).unwrap().1
}

fn truth(x: f64) -> f64 {
    (PI * x).sin() / (PI * PI) + (4.0 * PI * x).sin() / (4.0 * PI * PI)
}

#[test]
fn table_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--elements", "200", "table", "--m-max", "6"];
    let a = funcgp(&args, &dir.path().join("a"));
    let b = funcgp(&args, &dir.path().join("b"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let ta = fs::read_to_string(dir.path().join("a/table.csv")).unwrap();
    let tb = fs::read_to_string(dir.path().join("b/table.csv")).unwrap();
    assert_eq!(ta, tb);
    let lines: Vec<&str> = ta.lines().collect();
    assert_eq!(lines[0], "M,theta1,theta2,err_fgp,std_fgp,zeta1,zeta2,err_sgp,std_sgp");
    assert_eq!(lines.len(), 4);
    assert!(!dir.path().join("a/table_failures.csv").exists());
}

#[test]
fn points_csv_reproduces_reported_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = funcgp(&["--elements", "200", "case", "--m", "8"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cols = read_points(&dir.path().join("points_M8.csv"));
    let x = column(&cols, "x");
    let u = column(&cols, "u_true");
    let mean = column(&cols, "mean_fgp");
    assert!(x.windows(2).all(|w| w[0] < w[1]));
    assert_eq!((x[0], x[x.len() - 1]), (-1.0, 1.0));

    // Trapezoid rule on the squared nodal difference.
    let e2: Vec<f64> = u.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).collect();
    let integral: f64 = x
        .windows(2)
        .zip(e2.windows(2))
        .map(|(xs, es)| 0.5 * (xs[1] - xs[0]) * (es[0] + es[1]))
        .sum();
    let reported = stdout_value(&out, "err_fgp");
    assert!(
        (integral.sqrt() / reported - 1.0).abs() < 0.01,
        "trapezoid {} vs reported {reported}",
        integral.sqrt()
    );
    for (&xi, &ui) in x.iter().zip(u) {
        assert!((ui - truth(xi)).abs() < 1e-14);
    }
}

#[test]
fn best_knowledge_data_leave_the_model_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let out = funcgp(&["--elements", "200", "case", "--m", "6", "--bk-data"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cols = read_points(&dir.path().join("points_M6.csv"));
    let bk = column(&cols, "u_bk");
    let mean = column(&cols, "mean_fgp");
    let scale = bk.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in bk.iter().zip(mean) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

#[test]
fn data_file_is_interpolated() {
    let dir = tempfile::tempdir().unwrap();
    let xs = [-1.0, -0.55, -0.1, 0.3, 0.72, 1.0];
    let mut text = String::from("x,d\n");
    for x in xs {
        text.push_str(&format!("{x},{:e}\n", truth(x)));
    }
    let data = dir.path().join("obs.csv");
    fs::write(&data, text).unwrap();
    let out = funcgp(&["--elements", "100", "case", "--data", data.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_value(&out, "M"), 6.0);
    let cols = read_points(&dir.path().join("points_M6.csv"));
    let x = column(&cols, "x");
    let mean = column(&cols, "mean_fgp");
    for xi in xs {
        let k = x.iter().position(|&v| (v - xi).abs() < 1e-12).expect("observation is a node");
        assert!((mean[k] - truth(xi)).abs() < 1e-9 * 0.11, "x = {xi}");
    }
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{ "n_elements": 64, "m_min": 5, "m_max": 5 }"#).unwrap();
    let out = funcgp(&["--config", cfg.to_str().unwrap(), "table"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("5,"));

    let out = funcgp(
        &["--config", cfg.to_str().unwrap(), "--elements", "32", "case", "--m", "5"],
        dir.path(),
    );
    assert!(out.status.success());
    let cols = read_points(&dir.path().join("points_M5.csv"));
    // 33 uniform nodes plus ±0.618; the middle point 0 is already a node.
    assert_eq!(column(&cols, "x").len(), 33 + 2);
}

#[test]
fn invalid_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = funcgp(&["--elements", "50", "case", "--m", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{ "n_elemnts": 64 }"#).unwrap();
    let out = funcgp(&["--config", cfg.to_str().unwrap(), "table"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = funcgp(&["--sigma=-1", "case", "--m", "5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
