use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
n_grid = [64, 128, 256, 512, 1024]
repetitions = 2
seed = 5

[kernel]
type = "designed_spectral"
decay = { s = 0.5 }
truncation = 128

[target]
phi = { type = "holder", r = 0.25 }
law = "harmonic"

[noise]
type = "gaussian"
sigma = 0.1

[size_rule]
c = 2.0

[tolerances]
rate_tolerance = 10.0
min_r_squared = 0.0
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krr-nystrom")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn rate_sweep_passes_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = bin(&["rate-sweep", "-c", &cfg, "--out-dir", out.to_str().unwrap(), "--reps", "3", "--seed", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("[PASS] rate_exponent"));
    let csv = out.join("rate_sweep.csv");
    assert_eq!(body(&csv).lines().count(), 1 + 5 * 3);
    assert!(out.join("rate_sweep_summary.txt").exists());
    let first = body(&csv);
    let o = bin(&["rate-sweep", "-c", &cfg, "--out-dir", out.to_str().unwrap(), "--reps", "3", "--seed", "8"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, body(&csv));
}

#[test]
fn tolerance_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("rate_tolerance = 10.0", "rate_tolerance = 0.0\nrate_exponent = 5.0");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = bin(&["rate-sweep", "-c", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stdout).unwrap().contains("[FAIL] rate_exponent"));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("[64, 128, 256, 512, 1024]", "[128, 64]"));
    let o = bin(&["rate-sweep", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("strictly increasing"));
    let o = bin(&["rate-sweep", "-c", "/nonexistent/cfg.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn lambda0_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = bin(&["lambda0", "-c", &cfg, "--n", "100,1000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("n,lambda0,m"));
    let l0 = |l: &str| l.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!(l0(lines[2]) < l0(lines[1]));
}

#[test]
fn json_config_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{
        "kernel": { "type": "designed_spectral", "decay": { "s": 0.5 }, "truncation": 64 },
        "target": { "phi": { "type": "holder", "r": 0.5 } },
        "noise": { "type": "uniform_bounded", "half_width": 0.1 },
        "n_grid": [256],
        "diagnostics": { "truncation": 16, "n": 256, "trials": 10 }
    }"#;
    let p = dir.path().join("cfg.json");
    fs::write(&p, json).unwrap();
    let out = dir.path().join("out");
    let o = bin(&["diagnostics", "-c", p.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(body(&out.join("diagnostics.csv")).lines().count(), 6);
}
