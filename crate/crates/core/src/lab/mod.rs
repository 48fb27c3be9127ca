//! Experiment orchestration: configs, validation, the canned experiments
//! and their reports.

pub mod config;
mod experiments;
pub mod plot;
pub mod report;
pub mod validate;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{
    CauchyMode, CertifyCondition, CertifyConfig, CoefficientsConfig, DensityConfig, DiscretizationConfig, Experiment,
    ExperimentConfig, FlowConfig, FpeConfig, GridConfig, InitialDensity, MeasureConfig, ModulusConfig, MollifyConfig,
    ProbeConfig, StartMode, TestFunctionSpec, SCHEMA_VERSION,
};
pub use report::{hash_tables, Context, ExperimentReport, Verdict, BUDGET_SECONDS};
pub use validate::{validate, Finding};

use crate::{Error, Result};

/// Desk-scale default config of each experiment, as shipped in `configs/`.
pub fn preset(experiment: Experiment) -> ExperimentConfig {
    let text = match experiment {
        Experiment::OsgoodCertify => include_str!("../../configs/osgood-certify.toml"),
        Experiment::MollifyLadder => include_str!("../../configs/mollify-ladder.toml"),
        Experiment::FlowCauchy => include_str!("../../configs/flow-cauchy.toml"),
        Experiment::DensityBound => include_str!("../../configs/density-contract.toml"),
        Experiment::FpeDuality => include_str!("../../configs/fpe-ou.toml"),
    };
    ExperimentConfig::from_toml(text).expect("shipped preset parses")
}

/// Every shipped config by file stem.
pub fn shipped_configs() -> Vec<(&'static str, ExperimentConfig)> {
    let files: [(&str, &str); 9] = [
        ("osgood-certify", include_str!("../../configs/osgood-certify.toml")),
        ("mollify-ladder", include_str!("../../configs/mollify-ladder.toml")),
        ("flow-cauchy", include_str!("../../configs/flow-cauchy.toml")),
        ("flow-selfconv", include_str!("../../configs/flow-selfconv.toml")),
        ("flow-probe", include_str!("../../configs/flow-probe.toml")),
        ("density-contract", include_str!("../../configs/density-contract.toml")),
        ("density-rotation", include_str!("../../configs/density-rotation.toml")),
        ("fpe-ou", include_str!("../../configs/fpe-ou.toml")),
        ("fpe-vseries", include_str!("../../configs/fpe-vseries.toml")),
    ];
    files.into_iter().map(|(k, t)| (k, ExperimentConfig::from_toml(t).expect("shipped config parses"))).collect()
}

/// Directory of a run below the output root.
pub fn output_dir(cfg: &ExperimentConfig, root: &Path) -> PathBuf {
    match &cfg.output {
        Some(p) => root.join(p),
        None if !cfg.name.is_empty() => root.join(&cfg.name),
        None => root.join(cfg.experiment.key()),
    }
}

/// Validates, runs the experiment on a pool of `workers` threads and writes
/// `report.json` next to the tables. A numeric failure mid-run still yields
/// a report, with `failure` set and a failing `completed` verdict.
pub fn run(cfg: &ExperimentConfig, output_root: &Path) -> Result<ExperimentReport> {
    let findings = validate(cfg);
    if !findings.is_empty() {
        return Err(Error::Config(findings.iter().map(|f| f.to_string()).collect()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::param(format!("cannot build the worker pool: {e}")))?;
    let mut ctx = Context::new(output_dir(cfg, output_root))?;
    let start = Instant::now();
    let outcome = pool.install(|| match cfg.experiment {
        Experiment::OsgoodCertify => experiments::osgood_certify(cfg, &mut ctx),
        Experiment::MollifyLadder => experiments::mollify_ladder(cfg, &mut ctx),
        Experiment::FlowCauchy => experiments::flow_cauchy(cfg, &mut ctx),
        Experiment::DensityBound => experiments::density_bound(cfg, &mut ctx),
        Experiment::FpeDuality => experiments::fpe_duality(cfg, &mut ctx),
    });
    let wall = start.elapsed().as_secs_f64();
    let failure = outcome.err().map(|e| e.to_string());
    if let Some(f) = &failure {
        log::error!("run stopped early: {f}");
        ctx.verdict(Verdict::new("completed", 0.0, "run finishes without a numeric failure", false));
    }
    if wall > BUDGET_SECONDS {
        ctx.note(format!("wall clock {wall:.1} s exceeds the {BUDGET_SECONDS} s budget"));
    }
    let outputs_hash = hash_tables(&ctx.dir, &ctx.tables)?;
    let passed = failure.is_none() && !ctx.verdicts.is_empty() && ctx.verdicts.iter().all(|v| v.pass);
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment,
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        outputs_hash,
        config: cfg.clone(),
        verdicts: ctx.verdicts,
        tables: ctx.tables,
        plots: ctx.plots,
        notes: ctx.notes,
        failure,
        passed,
        wall_clock_seconds: wall,
        budget_seconds: BUDGET_SECONDS,
        workers: pool.current_num_threads(),
        timestamp: cfg.timestamp.clone(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(ctx.dir.join("report.json"), json)?;
    Ok(report)
}
