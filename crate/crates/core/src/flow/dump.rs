//! Binary columnar trajectory files.
//!
//! Layout: the 8-byte magic `FLWTRAJ1`, the JSON header length as a
//! little-endian `u64`, the UTF-8 JSON header, then one little-endian `f64`
//! column after another, each `rows` long.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::FlowEnsemble;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FLWTRAJ1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub dim: usize,
    pub n_paths: usize,
    pub n_particles: usize,
    pub t_end: f64,
    pub steps: usize,
    pub record_steps: Vec<usize>,
    pub master_seed: u64,
    pub scheme: super::Scheme,
    pub field: String,
    pub columns: Vec<String>,
    pub rows: usize,
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Columns `path, particle, t, x1..xd` with one row per recorded state.
pub fn write_trajectories(path: &Path, ens: &FlowEnsemble, extra: serde_json::Value) -> Result<()> {
    let d = ens.dim();
    let ns = ens.record_steps().len();
    let rows = ens.n_trajectories() * ns;
    let mut columns = vec!["path".to_string(), "particle".into(), "t".into()];
    columns.extend((1..=d).map(|i| format!("x{i}")));
    let grid = ens.grid();
    let header = TrajectoryHeader {
        dim: d,
        n_paths: ens.n_paths(),
        n_particles: ens.n_particles(),
        t_end: grid.t_end,
        steps: grid.steps,
        record_steps: ens.record_steps().to_vec(),
        master_seed: ens.noise().master_seed(),
        scheme: ens.scheme(),
        field: ens.field_name().to_string(),
        columns,
        rows,
        extra,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let np = ens.n_particles();
    let put = |w: &mut BufWriter<File>, f: &dyn Fn(usize, usize) -> f64| -> Result<()> {
        for t in 0..ens.n_trajectories() {
            for s in 0..ns {
                w.write_all(&f(t, s).to_le_bytes())?;
            }
        }
        Ok(())
    };
    put(&mut w, &|t, _| (t / np) as f64)?;
    put(&mut w, &|t, _| (t % np) as f64)?;
    put(&mut w, &|_, s| grid.time(ens.record_steps()[s]))?;
    for c in 0..d {
        put(&mut w, &|t, s| ens.state(t, s)[c])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<(TrajectoryHeader, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::param("not a trajectory file"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: TrajectoryHeader = serde_json::from_slice(&json)?;
    let mut cols = Vec::with_capacity(header.columns.len());
    let mut buf = [0u8; 8];
    for _ in &header.columns {
        let mut col = Vec::with_capacity(header.rows);
        for _ in 0..header.rows {
            r.read_exact(&mut buf)?;
            col.push(f64::from_le_bytes(buf));
        }
        cols.push(col);
    }
    Ok((header, cols))
}
