use std::process::{Command, Output};

fn adia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adia"))
        .args(args)
        .env("ADIA_JOBS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn timings_csv_on_stdout() {
    let out = adia(&["timings", "--model", "search:n=4", "--schedule", "linear", "--n", "1..4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("nu,n,parity,T,theta,gap_integral,delta_S"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1][2], "even");
    let t2: f64 = rows[1][3].parse().unwrap();
    let g: f64 = rows[1][5].parse().unwrap();
    assert!((t2 * g - 2.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn help_and_version_exit_zero() {
    assert!(adia(&["--help"]).status.success());
    assert!(adia(&["--version"]).status.success());
    assert!(adia(&["sweep", "--help"]).status.success());
}

#[test]
fn usage_errors_exit_64() {
    let out = adia(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(!out.stderr.is_empty());
    assert_eq!(adia(&["timings", "--no-such-flag"]).status.code(), Some(64));
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(adia(&["timings", "--model", "search:n=4", "--n", "1..3"]).status.code(), Some(2));
    assert_eq!(adia(&["timings", "--model", "bogus", "--schedule", "linear"]).status.code(), Some(2));
    let out = adia(&["sweep", "--model", "search:n=4", "--schedule", "linear", "--n", "2..4", "--tol=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(adia(&["timings", "--intervals", "many"]).status.code(), Some(2));
}

#[test]
fn evolve_reports_amplitudes() {
    let out = adia(&["evolve", "--model", "search:n=4", "--schedule", "linear", "--t", "20"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("nu,T,re,im,abs,steps"));
    let norm: f64 = text
        .lines()
        .skip(1)
        .take(2)
        .map(|l| l.split(',').nth(4).unwrap().parse::<f64>().unwrap().powi(2))
        .sum();
    assert!((norm - 1.0).abs() < 1e-10);
}

#[test]
fn predict_zeroes_even_indices() {
    let out = adia(&["predict", "--model", "search:n=4", "--schedule", "linear", "--n", "3..4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[1][4], "0");
    let odd: f64 = rows[0][4].parse().unwrap();
    let t: f64 = rows[0][3].parse().unwrap();
    assert!((odd - 2.0 * 0.2420614591379 / t).abs() < 1e-10);
}

#[test]
fn sweep_from_config_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let config = dir.path().join("sweep.json");
    let body = serde_json::json!({
        "model": "search:n=4",
        "schedule": "local:N=16",
        "n_range": "100..160",
        "n_step": 2,
        "tol": 1e-10,
        "output": csv,
    });
    std::fs::write(&config, body.to_string()).unwrap();
    let out = adia(&["sweep", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!stdout(&out).is_empty());
    let written = std::fs::read_to_string(&csv).unwrap();
    assert!(written.starts_with("# generated_unix="));
    assert_eq!(written.lines().filter(|l| !l.starts_with('#')).count(), 32);

    let fit = adia(&["fit", "--input", csv.to_str().unwrap(), "--parity", "even", "--window", "50..5000"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let text = stdout(&fit);
    let exponent: f64 = text.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((exponent + 2.0).abs() < 0.1, "{text}");

    let odd = adia(&["fit", csv.to_str().unwrap(), "--parity", "odd"]);
    assert_eq!(odd.status.code(), Some(3));
    let narrow = adia(&["fit", "--input", csv.to_str().unwrap(), "--window", "1..2"]);
    assert_eq!(narrow.status.code(), Some(3));
}
