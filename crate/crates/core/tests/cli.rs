use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ckflow(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ckflow"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn status_line(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    err.lines().rfind(|l| l.starts_with("STATUS=")).unwrap_or_default().to_string()
}

fn verdict_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("out/verdict.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn malformed_config_exits_64() {
    let dir = TempDir::new().unwrap();
    let out = ckflow(dir.path(), "geometry = \"flat\"\n[seed\n", &["verify"]);
    assert_eq!(out.status.code(), Some(64));
    assert_eq!(status_line(&out), "STATUS=config");
    assert!(String::from_utf8_lossy(&out.stderr).contains("TOML parse error"));
}

#[test]
fn unknown_key_and_missing_file_exit_64() {
    let dir = TempDir::new().unwrap();
    let out = ckflow(dir.path(), "[flow]\ncfl_constant = 0.2\n", &["seed"]);
    assert_eq!(out.status.code(), Some(64));
    let out = Command::new(env!("CARGO_BIN_EXE_ckflow"))
        .args(["--config", "/nonexistent/run.toml", "seed"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
    assert_eq!(status_line(&out), "STATUS=config");
}

#[test]
fn wrong_rotation_axis_on_paper_example_exits_1() {
    let dir = TempDir::new().unwrap();
    let config = "geometry = \"paper_example\"\n[rotation]\naxis = [0.0, 0.0, 1.0]\n[seed]\nlevel = 2\n";
    let out = ckflow(dir.path(), config, &["verify"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(status_line(&out), "STATUS=assumptions");
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("vii") && l.contains("FAIL")), "{table}");

    let out = ckflow(dir.path(), config, &["run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out/trace.csv").exists());
}

#[test]
fn verify_passes_on_the_paper_shell() {
    let dir = TempDir::new().unwrap();
    let config = "geometry = \"paper_example\"\n[verify]\nshell = [0.3, 1.8]\n[seed]\nlevel = 2\n";
    let out = ckflow(dir.path(), config, &["verify"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(status_line(&out), "STATUS=ok");
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("PASS").count(), 10);
}

#[test]
fn seed_writes_mesh_and_minima() {
    let dir = TempDir::new().unwrap();
    let config = "[rotation]\naxis = [0.0, 0.0, 1.0]\n[seed]\nkind = \"twisted\"\nsemiaxes = [1.6, 0.7, 0.7]\ntau = 2.0\nlevel = 3\n";
    let out = ckflow(dir.path(), config, &["seed"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let value = |key: &str| -> f64 {
        text.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim_start_matches(" = ").parse().unwrap()
    };
    assert!(value("min_u0") > 0.0);
    assert!(value("min_uperp") < 0.0);
    let obj = fs::read_to_string(dir.path().join("out/seed.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 642);
}

#[test]
fn profile_has_header_and_rows() {
    let dir = TempDir::new().unwrap();
    let out = ckflow(dir.path(), "[seed]\nlevel = 2\n[profile]\npoints = 16\n", &["profile"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,area,volume"));
    assert_eq!(lines.count(), 16);
}

#[test]
fn leaf_seed_converges_at_once() {
    let dir = TempDir::new().unwrap();
    let config = "[seed]\nkind = \"sphere\"\nradius = 0.9\nlevel = 3\n";
    let out = ckflow(dir.path(), config, &["run"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(status_line(&out), "STATUS=ok");
    assert_eq!(verdict_value(dir.path(), "converged"), "true");
    assert_eq!(verdict_value(dir.path(), "isoperimetric_pass"), "true");
    assert!(dir.path().join("out/frame_0.obj").exists());
}

#[test]
fn short_run_is_deterministic_and_reports_nonconvergence() {
    let config = "[seed]\nlevel = 2\n[flow]\nt_end = 0.02\n[output]\nframe_every = 2\n";
    let mut traces = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        let out = ckflow(dir.path(), config, &["run"]);
        assert_eq!(out.status.code(), Some(3));
        assert_eq!(status_line(&out), "STATUS=nonconv");
        assert_eq!(verdict_value(dir.path(), "converged"), "false");
        for key in ["area_initial", "area_final", "volume_initial", "volume_final", "area_leaf_equal_volume"] {
            assert!(verdict_value(dir.path(), key).parse::<f64>().unwrap() > 0.0);
        }
        let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
        let last_step: usize = trace.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
        assert!(dir.path().join("out/frame_0.obj").exists());
        assert!(dir.path().join("out/frame_2.obj").exists());
        assert!(dir.path().join(format!("out/frame_{last_step}.obj")).exists());
        traces.push(trace);
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn twisted_seed_without_rotation_is_a_flow_error() {
    let dir = TempDir::new().unwrap();
    let config = "[rotation]\naxis = [0.0, 0.0, 1.0]\n[schedule]\nt0 = 0\n[seed]\nkind = \"twisted\"\nsemiaxes = [1.6, 0.7, 0.7]\ntau = 2.0\nlevel = 3\n";
    let out = ckflow(dir.path(), config, &["run"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(status_line(&out), "STATUS=flow");
    assert!(String::from_utf8_lossy(&out.stderr).contains("strict starshapedness lost at t = 0"));
}
