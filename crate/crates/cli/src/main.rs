//! `flowlab`: runs the canned experiments and reports PASS/FAIL.
//!
//! Exit status: 0 when every verdict passes, 1 when any fails or the run
//! stops early, 2 for configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use flowlab::lab::{self, Experiment, ExperimentConfig, ExperimentReport};
use flowlab::Error;

#[derive(Parser)]
#[command(name = "flowlab", version, about = "Stochastic flows with rough coefficients: canned experiments")]
struct Cli {
    /// Root directory for every run's outputs.
    #[arg(long, env = "FLOWLAB_OUTPUT", default_value = "flowlab-output", global = true)]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Osgood divergence and (H_q) / (H_sigma) certification.
    Certify(Overrides),
    /// Distances along a mollification ladder.
    Mollify(Overrides),
    /// Cauchy trend of mollified flows, or step self-convergence.
    Flow {
        #[command(flatten)]
        common: Overrides,
        /// Also write the reference trajectories as `trajectories.bin`.
        #[arg(long)]
        dump: bool,
    },
    /// Density bound for the pushforward of the reference measure.
    Density(Overrides),
    /// Fokker-Planck solve and duality against particles.
    Fpe(Overrides),
    /// Run the experiment described by a config file.
    Run {
        #[arg(value_name = "CONFIG")]
        file: PathBuf,
        #[command(flatten)]
        common: Overrides,
    },
    /// Static checks of a config file; prints every finding.
    Validate { config: PathBuf },
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Config file; the built-in desk-scale preset when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory below the output root.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the JSON report instead of the verdict summary.
    #[arg(long)]
    json: bool,
}

enum Failure {
    Config(Vec<String>),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Config(list) => Failure::Config(list),
        other => Failure::Config(vec![other.to_string()]),
    })
}

fn config_for(expected: Option<Experiment>, o: &Overrides, path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (path.or(o.config.as_deref()), expected) {
        (Some(p), _) => load(p)?,
        (None, Some(e)) => lab::preset(e),
        (None, None) => return Err(Failure::Config(vec!["no config given".into()])),
    };
    if let Some(e) = expected {
        if cfg.experiment != e {
            return Err(Failure::Config(vec![format!(
                "experiment: config runs {}, this subcommand runs {}",
                cfg.experiment.key(),
                e.key()
            )]));
        }
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    if let Some(out) = &o.output {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig, root: &Path, json: bool) -> Result<ExperimentReport, Failure> {
    let report = match lab::run(cfg, root) {
        Ok(r) => r,
        Err(Error::Config(list)) => return Err(Failure::Config(list)),
        Err(e) => return Err(Failure::Other(anyhow::Error::new(e).context("run failed"))),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).context("serializing the report")?);
    } else {
        for v in &report.verdicts {
            println!("{} {} = {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.name, v.value, v.rule);
        }
        if let Some(f) = &report.failure {
            println!("stopped early: {f}");
        }
        println!(
            "{} in {:.1} s, outputs in {}",
            if report.passed { "PASS" } else { "FAIL" },
            report.wall_clock_seconds,
            lab::output_dir(cfg, root).display()
        );
    }
    Ok(report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let root = cli.output_root.clone();
    let outcome = match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                let findings = lab::validate(&cfg);
                for f in &findings {
                    println!("{f}");
                }
                if findings.is_empty() {
                    println!("ok");
                    return ExitCode::SUCCESS;
                }
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
        Command::Run { file, common } => {
            config_for(None, &common, Some(&file)).and_then(|c| execute(&c, &root, common.json))
        }
        Command::Flow { common, dump } => config_for(Some(Experiment::FlowCauchy), &common, None).and_then(|mut c| {
            c.flow.dump |= dump;
            execute(&c, &root, common.json)
        }),
        Command::Certify(o) => config_for(Some(Experiment::OsgoodCertify), &o, None).and_then(|c| execute(&c, &root, o.json)),
        Command::Mollify(o) => config_for(Some(Experiment::MollifyLadder), &o, None).and_then(|c| execute(&c, &root, o.json)),
        Command::Density(o) => config_for(Some(Experiment::DensityBound), &o, None).and_then(|c| execute(&c, &root, o.json)),
        Command::Fpe(o) => config_for(Some(Experiment::FpeDuality), &o, None).and_then(|c| execute(&c, &root, o.json)),
    };
    match outcome {
        Ok(r) if r.passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(Failure::Config(list)) => {
            eprintln!("configuration error:");
            for l in list {
                eprintln!("  {l}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
