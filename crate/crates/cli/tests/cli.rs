use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
[geometry]
l = 15.0
h = 170.0
s = 20.0
n_det = 192
du = 0.68
n_views = 64
t_extra = 1

[errors]
dl = 2.0

[recon]
grid = 128

[noise]
enabled = true
"#;

fn smlct(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_smlct"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let sino = dir.path().join("sino");
    let out = smlct(&["simulate", "--config", s(&cfg), "--out", s(&sino), "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sino.join("sino_10.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(sino.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);

    let cal = dir.path().join("cal");
    let out = smlct(&[
        "calibrate",
        "--config",
        s(&cfg),
        "--sinograms",
        s(&sino),
        "--out",
        s(&cal),
        "--mask-alpha-deg",
        "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["dl_hat_mm"].as_f64().unwrap() > 1.0);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(cal.join("report.json")).unwrap()).unwrap();
    let alpha = report["result"]["alpha_band"].as_f64().unwrap();
    assert!((alpha - 20f64.to_radians()).abs() < 1e-12);
}

#[test]
fn segment_check_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = smlct(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--segments",
        "10",
        "--no-noise",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("sino_10.json").exists());
    let out = smlct(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--segments",
        "12",
    ]);
    assert!(!out.status.success());

    std::fs::write(&cfg, "[geometry]\nbogus = 1\n").unwrap();
    let out = smlct(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
