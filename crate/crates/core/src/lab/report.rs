//! Verdicts, the JSON report and the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Experiment, ExperimentConfig};
use crate::Result;

/// Seconds every default experiment is expected to finish in.
pub const BUDGET_SECONDS: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `"< 0.6"`.
    pub rule: String,
    pub pass: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, value: f64, rule: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value, rule: rule.into(), pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub name: String,
    pub config_hash: String,
    /// SHA-256 over the CSV tables of this run, in file-name order.
    pub outputs_hash: String,
    pub config: ExperimentConfig,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<String>,
    pub plots: Vec<String>,
    pub notes: Vec<String>,
    /// Set when the run stopped early; the tables written so far remain.
    pub failure: Option<String>,
    pub passed: bool,
    pub wall_clock_seconds: f64,
    pub budget_seconds: f64,
    pub workers: usize,
    pub timestamp: Option<String>,
}

impl ExperimentReport {
    pub fn failed_verdicts(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.pass).collect()
    }
}

/// Output directory plus everything an experiment has recorded so far.
pub struct Context {
    pub dir: PathBuf,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<String>,
    pub plots: Vec<String>,
    pub notes: Vec<String>,
}

impl Context {
    pub fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, verdicts: vec![], tables: vec![], plots: vec![], notes: vec![] })
    }

    pub fn verdict(&mut self, v: Verdict) {
        log::info!("{} {} = {:e} ({})", if v.pass { "PASS" } else { "FAIL" }, v.name, v.value, v.rule);
        self.verdicts.push(v);
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    /// Writes a CSV table; cells are formatted with `{}` (shortest
    /// round-trip representation).
    pub fn table(&mut self, file: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.dir.join(file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.tables.push(file.to_string());
        Ok(path)
    }

    /// Registers a table written by another routine.
    pub fn register_table(&mut self, file: &str) {
        self.tables.push(file.to_string());
    }

    pub fn plot_path(&mut self, file: &str) -> PathBuf {
        self.plots.push(file.to_string());
        self.dir.join(file)
    }
}

/// SHA-256 over `name \0 bytes` of the named CSV files of `dir`, sorted by
/// name. Files left over from earlier runs are not included.
pub fn hash_tables(dir: &Path, tables: &[String]) -> Result<String> {
    let mut names: Vec<&String> = tables.iter().filter(|t| t.ends_with(".csv")).collect();
    names.sort();
    names.dedup();
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_bytes());
        h.update([0u8]);
        h.update(fs::read(dir.join(n))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Formats a float for a CSV cell.
pub fn cell(v: f64) -> String {
    v.to_string()
}
