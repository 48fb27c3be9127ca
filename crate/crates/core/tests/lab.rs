use flowlab::lab::{preset, run, shipped_configs, validate, Experiment, ExperimentConfig, ExperimentReport};
use flowlab::Error;

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

const FROZEN: &str = r#"
schema_version = 1
experiment = "flow-cauchy"
name = "frozen"
seed = 1

[coefficients]
d = 1
drift = { kind = "zero" }
diffusion = { kind = "zero" }

[mollify]
levels = [4, 8]
quadrature_points = 32

[flow]
steps = 64
particles = 200
paths = 4
"#;

const OU: &str = r#"
schema_version = 1
experiment = "fpe-duality"
name = "ou"
seed = 2

[coefficients]
d = 1
drift = { kind = "ou", theta = 1.0 }
diffusion = { kind = "constant", scale = 1.0 }

[grid]
lower = [-6.0]
upper = [6.0]
resolution = [384]

[flow]
steps = 128
paths = 400

[fpe]
initial = { kind = "gaussian", variance = 0.25 }
start_grid = { lower = [-3.0], upper = [3.0], resolution = [120] }
"#;

fn verdict<'a>(r: &'a ExperimentReport, name: &str) -> &'a flowlab::lab::Verdict {
    r.verdicts.iter().find(|v| v.name == name).unwrap_or_else(|| panic!("no verdict {name}: {:?}", r.verdicts))
}

#[test]
fn frozen_ladder_has_zero_distances() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&parse(FROZEN), dir.path()).unwrap();
    assert!(r.passed, "{:?}", r.verdicts);
    assert_eq!(verdict(&r, "cauchy-trend").value, 0.0);
    let summary = std::fs::read_to_string(dir.path().join("frozen/summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "4");
    assert_eq!(row[1], "0");
    assert_eq!(row[4], "0");
    assert!(dir.path().join("frozen/report.json").exists());
    assert!(dir.path().join("frozen/cauchy.png").exists());
}

#[test]
fn ou_duality_passes() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&parse(OU), dir.path()).unwrap();
    assert!(r.passed, "{:?}", r.verdicts);
    assert!(verdict(&r, "duality").value <= 1.0, "{:?}", verdict(&r, "duality"));
    let fpe = std::fs::read_to_string(dir.path().join("ou/fpe.csv")).unwrap();
    assert!(fpe.lines().next().unwrap().contains("duality_gap_square"));
    assert!(r.notes.iter().any(|n| n.contains("bounded box")));
}

#[test]
fn contracting_density_passes() {
    let mut cfg = preset(Experiment::DensityBound);
    cfg.flow.particles = 5000;
    cfg.flow.paths = 4;
    cfg.flow.steps = 64;
    let dir = tempfile::tempdir().unwrap();
    let r = run(&cfg, dir.path()).unwrap();
    assert!(r.passed, "{:?}", r.verdicts);
    let v = verdict(&r, "density-bound-p1-t1");
    assert!((v.value / 1f64.exp() - 1.0).abs() < 0.1, "{v:?}");
    assert!(dir.path().join("density-contract/k_t1.csv").exists());
}

#[test]
fn validation_examples() {
    let mut c = parse(FROZEN);
    c.mollify.levels.clear();
    let f = validate(&c);
    assert!(f.iter().any(|f| f.message == "ladder requires ≥ 2 levels"), "{f:?}");
    match run(&c, std::env::temp_dir().as_path()) {
        Err(Error::Config(list)) => assert!(list.iter().any(|m| m.contains("ladder requires"))),
        other => panic!("expected a config error, got {other:?}"),
    }

    let mut c = parse(OU);
    c.fpe.scheme = flowlab::fokker_planck::FpeScheme::ExplicitEuler;
    c.fpe.dt = Some(0.01);
    let f = validate(&c);
    // h = 1/32, a = 1: h^2 / (2 a) = 1/2048 beats h / |b|max
    let limit = (12.0f64 / 384.0).powi(2) / 2.0;
    assert_eq!(f.len(), 1, "{f:?}");
    assert_eq!(f[0].key, "fpe.dt");
    assert!(f[0].message.contains(&format!("{limit:e}")), "{}", f[0].message);

    assert!(validate(&parse(OU)).is_empty());
    for (name, cfg) in shipped_configs() {
        assert!(validate(&cfg).is_empty(), "{name}: {:?}", validate(&cfg));
    }
}

#[test]
fn unknown_keys_and_bad_values_are_reported() {
    let err = ExperimentConfig::from_toml(&FROZEN.replace("seed = 1", "seed = 1\nsed = 2")).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let mut c = parse(FROZEN);
    c.schema_version = 9;
    c.flow.paths = 1;
    c.coefficients.d = 4;
    let keys: Vec<String> = validate(&c).into_iter().map(|f| f.key).collect();
    for k in ["schema_version", "coefficients.d", "flow.paths"] {
        assert!(keys.iter().any(|x| x == k), "{keys:?}");
    }
}

#[test]
fn numeric_failure_yields_partial_report() {
    // a start grid far from the initial density leaves no particles
    let mut c = parse(OU);
    c.fpe.start_grid = Some(flowlab::lab::GridConfig { lower: vec![40.0], upper: vec![41.0], resolution: vec![4] });
    let dir = tempfile::tempdir().unwrap();
    let r = run(&c, dir.path()).unwrap();
    assert!(!r.passed);
    assert!(r.failure.is_some());
    let done = verdict(&r, "completed");
    assert!(!done.pass);
    assert!(dir.path().join("ou/report.json").exists());
}

#[test]
fn replay_is_byte_identical_across_workers() {
    let mut hashes = Vec::new();
    for workers in [1, 3] {
        let mut c = parse(OU);
        c.workers = workers;
        c.flow.paths = 50;
        let dir = tempfile::tempdir().unwrap();
        let r = run(&c, dir.path()).unwrap();
        hashes.push((r.config_hash, r.outputs_hash));
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn config_round_trip_and_hash() {
    for (_, c) in shipped_configs() {
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let mut d = c.clone();
        d.workers = 7;
        d.timestamp = Some("now".into());
        assert_eq!(d.hash(), c.hash());
        d.seed += 1;
        assert_ne!(d.hash(), c.hash());
    }
}
