use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn decoherence(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decoherence"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = decoherence(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

/// Data rows of a CSV with `#` comments, header dropped.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const AMPLITUDES: &str = r#"
[physics]
b_field_2pikhz = 0.0
sqrt_2r1_gl_2pikhz = 700.0
sqrt_r2_gl_2pikhz = 700.0

[simulate]
initial_n0 = 0.8
initial_n1 = 0.2
"#;

#[test]
fn rates_for_equal_rate_amplitudes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", AMPLITUDES);
    let v = json(&["rates", "--config", &cfg]);
    assert!((v["scattering"]["r2_over_r1"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((v["effective"]["p1_inf"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["provenance"]["seed"], 0);
    assert_eq!(v["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn rates_without_light_and_without_energy_channel() {
    let v = json(&["rates"]);
    assert_eq!(v["scattering"]["r1"], 0.0);
    assert_eq!(v["scattering"]["r2"], 0.0);
    for k in ["gamma", "Gamma", "p1_inf"] {
        assert!(v["effective"][k].is_null(), "{k}");
    }
    let v = json(&["rates", "--i0", "1e-4", "--alpha-deg", "0"]);
    assert!(v["effective"]["Gamma"].is_null());
    assert!(v["effective"]["gamma"].as_f64().unwrap() > 0.0);
    let csv = ok(&["rates", "--format", "csv", "--i0", "1e-4"]);
    assert!(csv.starts_with("# version="));
    assert!(csv.contains("\nquantity,value,unit\n"));
}

#[test]
fn simulate_zero_light_pi_pulse() {
    // π pulse in 10 steps at Ω = 2π × 4.2 kHz
    let dt = format!("{}", 1e6 / (2.0 * 4.2e3) / 10.0);
    let out = ok(&["simulate", "--dt-us", &dt, "--nmax", "20"]);
    let header = out.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "theta_rad,tau_s,p1,n0,n1,n2,n3");
    let r = rows(&out);
    assert_eq!(r.len(), 21);
    let theta: f64 = r[10][0].parse().unwrap();
    let p1: f64 = r[10][2].parse().unwrap();
    assert!((theta - std::f64::consts::PI).abs() < 1e-12);
    assert!((p1 - 1.0).abs() < 1e-8, "{p1}");
}

#[test]
fn simulate_reaches_plateau_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", AMPLITUDES);
    let a = ok(&["simulate", "--config", &cfg]);
    let b = ok(&["simulate", "--config", &cfg]);
    assert_eq!(a, b);
    let last = rows(&a).pop().unwrap();
    let p1: f64 = last[2].parse().unwrap();
    assert!((p1 - 2.0 / 3.0).abs() < 1e-3, "{p1}");
    let v = json(&["simulate", "--config", &cfg, "--format", "json", "--nmax", "5"]);
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn simulate_then_fit() {
    let dir = TempDir::new().unwrap();
    let curve = path(&dir, "curve.csv");
    ok(&[
        "simulate", "--i0", "3e-5", "--alpha-deg", "50", "--b-field-2pikhz", "0", "--dt-us", "20", "--nmax", "1500",
        "--out", &curve,
    ]);
    let v = json(&["fit", &curve]);
    for k in ["omega", "lambda", "p_inf", "amplitude", "phase", "residual_rms", "converged"] {
        assert!(!v[k].is_null(), "{k}");
    }
    assert_eq!(v["converged"], true);
    assert!((v["omega"].as_f64().unwrap() / 4.2 - 1.0).abs() < 1e-2);
    for k in ["gamma", "Gamma", "r2_over_r1"] {
        assert!(v["derived"][k].as_f64().unwrap() > 0.0, "{k}");
    }
}

#[test]
fn trajectories_are_reproducible_and_replayable() {
    let dir = TempDir::new().unwrap();
    let args = |out: &str| {
        vec![
            "trajectories".to_string(),
            "--i0".into(),
            "2e-5".into(),
            "--alpha-deg".into(),
            "45".into(),
            "--seed".into(),
            "11".into(),
            "--ntraj".into(),
            "40".into(),
            "--nmax".into(),
            "60".into(),
            "--out".into(),
            out.to_string(),
        ]
    };
    let a = path(&dir, "a.txt");
    let b = path(&dir, "b.txt");
    for out in [&a, &b] {
        let argv = args(out);
        ok(&argv.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let read = |p: &str| fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    let curve_a = path(&dir, "a.curve.csv");
    assert!(Path::new(&curve_a).exists());
    assert_eq!(read(&curve_a), read(&path(&dir, "b.curve.csv")));

    let c = path(&dir, "c.txt");
    ok(&["trajectories", "--replay", &a, "--out", &c]);
    assert_eq!(read(&a), read(&c));
    assert_eq!(read(&curve_a), read(&path(&dir, "c.curve.csv")));

    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.starts_with("# decoherence trajectories\n# version="));
    assert!(text.contains("# seed=11\n"));
    assert_eq!(text.lines().filter(|l| l.len() == 60 && !l.contains('=')).count(), 40);
}

#[test]
fn fit_accepts_accumulated_curves() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "t.txt");
    ok(&[
        "trajectories", "--i0", "2e-5", "--alpha-deg", "45", "--dt-us", "20", "--nmax", "200", "--ntraj", "400",
        "--seed", "3", "--out", &out,
    ]);
    let v = json(&["fit", &path(&dir, "t.curve.csv")]);
    assert_eq!(v["converged"], true);
    assert!((v["omega"].as_f64().unwrap() / 4.2 - 1.0).abs() < 0.05);
}

#[test]
fn design_round_trip_and_infeasible_report() {
    let v = json(&["design", "--gamma-2pikhz", "0.5", "--big-gamma-2pikhz", "2.0"]);
    assert_eq!(v["feasible"], true);
    assert!((v["achieved"]["gamma"].as_f64().unwrap() / 0.5 - 1.0).abs() < 1e-3);
    assert!((v["achieved"]["Gamma"].as_f64().unwrap() / 2.0 - 1.0).abs() < 1e-3);
    let i0 = v["i0"].as_f64().unwrap().to_string();
    let alpha = v["alpha_deg"].as_f64().unwrap().to_string();
    let r = json(&["rates", "--i0", &i0, "--alpha-deg", &alpha]);
    assert!((r["effective"]["gamma"].as_f64().unwrap() / 0.5 - 1.0).abs() < 1e-3);

    let out = decoherence(&["design", "--gamma-2pikhz", "3", "--big-gamma-2pikhz", "0.05", "--i0-max", "1e-3"]);
    assert_eq!(out.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["feasible"], false);
    assert!(v["constraint"].as_str().unwrap().starts_with("i0 upper bound"));
}

#[test]
fn sweep_over_r2_amplitude_family() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", AMPLITUDES);
    let a = ok(&["sweep", "--config", &cfg, "--axis", "sqrt_r2_gl_2pikhz", "--values", "70,140,350,700"]);
    let b = ok(&["sweep", "--config", &cfg, "--axis", "sqrt_r2_gl_2pikhz", "--values", "700,70,350,140"]);
    assert_eq!(a, b);
    let r = rows(&a);
    assert_eq!(r.len(), 4 * 301);
    for (k, want) in [0.990196, 0.962963, 0.833333, 0.666667].into_iter().enumerate() {
        let last = &r[301 * k + 300];
        assert_eq!(last[0], "sqrt_r2_gl_2pikhz");
        let p1: f64 = last[4].parse().unwrap();
        assert!((p1 - want).abs() < 1e-3, "{} {p1} vs {want}", last[1]);
    }
    let empty = ok(&["sweep", "--config", &cfg]);
    assert!(rows(&empty).is_empty());
    assert!(empty.contains("# config:"));
    assert!(empty.contains("sqrt_2r1_gl_2pikhz = 700.0"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", "seed = 1\n\n[physics]\nomgea_2pikhz = 4.2\n");
    let out = decoherence(&["rates", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert_eq!(decoherence(&["sweep", "--axis", "colour", "--values", "1"]).status.code(), Some(2));
    assert_eq!(decoherence(&["rates", "--i0", "-1"]).status.code(), Some(2));
    assert_eq!(decoherence(&["rates", "--config", &path(&dir, "missing.toml")]).status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", "seed = 5\n[physics]\ni0 = 1e-4\nalpha_deg = 30.0\n");
    let a = json(&["rates", "--config", &cfg]);
    let b = json(&["rates", "--config", &cfg, "--alpha-deg", "60", "--seed", "9"]);
    assert_eq!(a["provenance"]["seed"], 5);
    assert_eq!(b["provenance"]["seed"], 9);
    assert_ne!(a["provenance"]["config_hash"], b["provenance"]["config_hash"]);
    assert!(b["scattering"]["r2_over_r1"].as_f64().unwrap() > a["scattering"]["r2_over_r1"].as_f64().unwrap());
}
