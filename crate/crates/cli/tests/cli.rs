use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn selfsim(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_selfsim"));
    c.args(args);
    match threads {
        Some(t) => c.env("SELFSIM_THREADS", t),
        None => c.env_remove("SELFSIM_THREADS"),
    };
    c.output().expect("binary runs")
}

fn csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).expect("error JSON on stderr")
}

#[test]
fn cov_preset_writes_matrix_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let r = selfsim(&["cov", "--preset", "fbm-takenaka", "--H", "0.25", "--grid", "0:2:9", "--out", o], None);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = csv(&out.join("cov.csv"));
    assert_eq!(m.len(), 9);
    assert!(m.iter().all(|row| row.len() == 9));
    // Grid point 0.25: |s|^{1/2} + |t|^{1/2} - 0 = 1.
    assert!((m[1][1] - 1.0).abs() < 1e-12);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"][0]["path"], "cov.csv");
    let first = fs::read(out.join("manifest.json")).unwrap();
    let r = selfsim(&["cov", "--preset", "fbm-takenaka", "--H", "0.25", "--grid", "0:2:9", "--out", o], None);
    assert!(r.status.success());
    assert_eq!(first, fs::read(out.join("manifest.json")).unwrap());
}

#[test]
fn hard_membrane_exact_is_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = selfsim(
        &["membrane", "--mode", "hard", "--domain", "interval:0,1", "--beta", "-1", "--grid", "0:1:11", "--exact", "--out", o],
        None,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = csv(&dir.path().join("membrane_cov.csv"));
    for i in 0..11 {
        for j in 0..11 {
            let (s, t) = (i as f64 / 10.0, j as f64 / 10.0);
            let exact = 0.5 * s.min(t) * (1.0 - s.max(t));
            assert!((m[i][j] - exact).abs() < 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn hard_membrane_sample_validates() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = selfsim(
        &[
            "membrane", "--mode", "hard", "--beta", "-1", "--grid", "0.2:0.8:4", "--n-paths", "20000", "--u-min", "1e-4",
            "--z-max", "4", "--out", o,
        ],
        None,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(dir.path().join("paths.csv").exists());
    assert!(dir.path().join("validation.json").exists());
}

#[test]
fn soft_membrane_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = selfsim(
        &["membrane", "--mode", "soft", "--domain", "ball:0,0,1", "--H", "0.25", "--points", "0.5,0;0,0.25", "--exact", "--out", o],
        None,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = csv(&dir.path().join("membrane_cov.csv"));
    assert!(m[0][0] > 0.0 && m[1][1] > 0.0);
    assert_eq!(m[0][1], m[1][0]);
}

#[test]
fn shot_noise_paths_ignore_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let r = selfsim(
            &[
                "sample", "--preset", "fbm-takenaka", "--backend", "shotnoise", "--grid", "0.5:2:4", "--n-paths", "500", "--seed", "3",
                "--out", out.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        bytes.push(fs::read(out.join("paths.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn cholesky_sample_z_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = selfsim(&["sample", "--preset", "bm", "--grid", "0.5:1:2", "--n-paths", "20000", "--z-max", "4", "--out", o], None);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    // A zero threshold cannot be met by a finite sample.
    let r = selfsim(&["sample", "--preset", "bm", "--grid", "0.5:1:2", "--n-paths", "200", "--z-max", "0", "--out", o], None);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"command": "cov", "grid": "0:1:3", "family": {"family": "brownian_motion"}}"#).unwrap();
    let o = dir.path().join("out");
    let r = selfsim(&["cov", "--grid", "0:1:5", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()], None);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = csv(&o.join("cov.csv"));
    assert_eq!(m.len(), 3);
    assert_eq!(m[1][2], 0.5);
    fs::write(&cfg, r#"{"command": "sample"}"#).unwrap();
    let r = selfsim(&["cov", "--preset", "bm", "--grid", "0:1:3", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn tangent_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = selfsim(&["tangent", "--beta", "-1", "--out", o], None);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("tangent.json")).unwrap()).unwrap();
    assert!((rep["h_hat"].as_f64().unwrap() - 0.5).abs() < 0.01);
}

#[test]
fn validate_subset_and_failure_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = selfsim(&["validate", "--suite", "full", "--criteria", "1,2,3", "--out", o], None);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    let text = String::from_utf8_lossy(&r.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
    let r = selfsim(&["validate", "--criteria", "9", "--out", o], None);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("FAIL"));
}

#[test]
fn errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = selfsim(&["cov", "--preset", "nope", "--grid", "0:1:3", "--out", o], None);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(stderr_json(&r)["error"], "UnknownPreset");
    let r = selfsim(&["cov", "--preset", "bm", "--out", o], None);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(stderr_json(&r)["error"], "InvalidConfig");
    let r = selfsim(&["cov", "--not-a-flag"], None);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(stderr_json(&r)["error"], "InvalidArguments");
    let r = selfsim(&["membrane", "--domain", "interval:0,1", "--beta", "2", "--grid", "0:1:3", "--exact", "--out", o], None);
    assert_eq!(r.status.code(), Some(1));
    let r = selfsim(&["sample", "--preset", "bm", "--grid", "0:1:3", "--out", o], Some("zero"));
    assert_eq!(r.status.code(), Some(1));
}
