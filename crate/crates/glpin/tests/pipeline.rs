//! End-to-end runs of the staged pipeline and the command-line tool on a small ball.

use glpin::pipeline::{run_pipeline, RunConfig, StageStatus};
use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
name = "small"
seed = 3
output = "unused"
[domain]
center = [0.0, 0.0, 0.0]
radius = 1.0
[grid]
field_h = 0.125
pad = 3
cells_per_eps = 2.0
lattice_spacing = 0.25
[pinning]
eps = [0.2]
[pinning.model]
kind = "constant"
value = 1.0
[field]
direction = [0.0, 0.0, 1.0]
h_ex = 1.0
eta = 0.45
[onset]
h_max = 30.0
samples = 61
[curve]
source = "isoflux"
"#;

fn small(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

#[test]
fn pipeline_is_deterministic_and_complete() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = run_pipeline(&small(d1.path())).unwrap();
    let m2 = run_pipeline(&small(d2.path())).unwrap();
    assert!(m1.succeeded(), "{:?}", m1.first_failure());
    let names: Vec<&str> = m1.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["config", "profile", "pinning", "meissner", "isoflux", "bs", "construct", "onset"]);
    for (a, b) in m1.stages.iter().zip(&m2.stages) {
        assert_eq!(a.status, StageStatus::Ok);
        if a.stage != "config" {
            assert_eq!(a.outputs, b.outputs, "stage {}", a.stage);
        }
        for (file, hash) in &a.outputs {
            let bytes = std::fs::read(d1.path().join(file)).unwrap();
            assert_eq!(&glpin::io::sha256_hex(&bytes), hash);
        }
    }
    assert!(d1.path().join("manifest.json").exists());
    let onset = &m1.onset[0];
    assert!(onset.ratio > 0.0);
    assert!((onset.hc1 - 0.2f64.ln().abs() / (2.0 * onset.ratio)).abs() < 1e-12);
}

#[test]
fn failed_stage_skips_downstream_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.curve.source = glpin::pipeline::CurveSource::File { path: dir.path().join("missing.csv") };
    let m = run_pipeline(&cfg).unwrap();
    assert!(!m.succeeded());
    assert_eq!(m.first_failure().unwrap().stage, "curve");
    assert!(m.stages.iter().filter(|s| s.eps.is_some()).all(|s| s.status == StageStatus::Skipped));
}

#[test]
fn validation_rejects_out_of_range_settings() {
    let ok = RunConfig::from_toml(SMALL).unwrap();
    ok.validate().unwrap();
    let mut bad = ok.clone();
    bad.field.eta = 0.6;
    assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    let mut bad = ok.clone();
    bad.field.h_ex = 3.0;
    assert!(bad.validate().is_err());
    let mut bad = ok.clone();
    bad.pinning.eps = vec![0.5];
    assert!(bad.validate().is_err());
    let mut bad = ok.clone();
    bad.grid.cells_per_eps = 1.2;
    assert!(bad.validate().is_err());
    assert!(RunConfig::from_toml(&SMALL.replace("radius = 1.0", "radius = 1.0\nextra = 1")).is_err());
    let again = RunConfig::from_toml(&ok.to_toml().unwrap()).unwrap();
    assert_eq!(again.to_toml().unwrap(), ok.to_toml().unwrap());
}

fn glpin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_glpin")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn command_line_exit_codes() {
    let (code, out) = glpin(&["hc1", "--ratio", "0.5", "--epsilon", "0.001"]);
    assert_eq!(code, 0);
    assert!((out.trim().parse::<f64>().unwrap() - 1000f64.ln()).abs() < 1e-12);
    assert_eq!(glpin(&["hc1", "--ratio", "-0.1", "--epsilon", "0.1"]).0, 2);
    assert_eq!(glpin(&["hc1", "--ratio", "0.5", "--epsilon", "1.5"]).0, 2);
    assert_eq!(glpin(&["no-such-command"]).0, 2);
    let (code, out) = glpin(&["verify"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().all(|l| l.starts_with("PASS")));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, SMALL.replace("eta = 0.45", "eta = 0.6")).unwrap();
    assert_eq!(glpin(&["pinning", "--config", path.to_str().unwrap()]).0, 2);
    assert_eq!(glpin(&["pinning", "--config", dir.path().join("absent.toml").to_str().unwrap()]).0, 2);

    let good = dir.path().join("small.toml");
    std::fs::write(&good, SMALL).unwrap();
    let out_dir = dir.path().join("out");
    let (code, out) = glpin(&["pinning", "--config", good.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["min_rho2"], 1.0);
    let rho = glpin::io::read_field(&out_dir.join("eps0.2_rho.glf")).unwrap().into_scalar().unwrap();
    assert!(rho.values.iter().all(|&v| v == 1.0));
}
