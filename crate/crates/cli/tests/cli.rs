use std::path::Path;
use std::process::{Command, Output};

fn flowlab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlab"))
        .args(args)
        .env("FLOWLAB_OUTPUT", root)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const FROZEN: &str = r#"
schema_version = 1
experiment = "flow-cauchy"
name = "frozen"

[coefficients]
d = 1
drift = { kind = "zero" }
diffusion = { kind = "zero" }

[mollify]
levels = [4, 8]
quadrature_points = 32

[flow]
steps = 32
particles = 50
paths = 2
"#;

#[test]
fn run_passes_and_writes_under_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "frozen.toml", FROZEN);
    let out = flowlab(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS cauchy-trend"), "{text}");
    assert!(dir.path().join("frozen/report.json").exists());
    assert!(dir.path().join("frozen/summary.csv").exists());
}

#[test]
fn flow_subcommand_dumps_binary_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "frozen.toml", FROZEN);
    let out = flowlab(dir.path(), &["flow", "--config", &cfg, "--dump", "--json", "--output", "dumped"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    let bin = std::fs::read(dir.path().join("dumped/trajectories.bin")).unwrap();
    assert_eq!(&bin[..8], b"FLWTRAJ1");
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
schema_version = 1
experiment = "flow-cauchy"
name = "narrow"

[coefficients]
d = 1
drift = { kind = "ou" }
diffusion = { kind = "constant" }

[flow]
steps = 32
particles = 50
paths = 4
cauchy = "steps"
step_ladder = [8, 16, 32]
ratio_band = [0.0, 0.01]
"#;
    let cfg = write(dir.path(), "narrow.toml", text);
    let out = flowlab(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL self-convergence-ratio-16"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &FROZEN.replace("levels = [4, 8]", "levels = []"));
    let out = flowlab(dir.path(), &["validate", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ladder requires ≥ 2 levels"));
    let out = flowlab(dir.path(), &["run", &bad]);
    assert_eq!(out.status.code(), Some(2));

    let out = flowlab(dir.path(), &["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(2));

    let good = write(dir.path(), "good.toml", FROZEN);
    let out = flowlab(dir.path(), &["certify", "--config", &good]);
    assert_eq!(out.status.code(), Some(2), "experiment mismatch is a config error");

    let out = flowlab(dir.path(), &["validate", &good]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
