use std::collections::BTreeSet;
use std::path::Path;

use super::{MatrixField, Smoothness, VectorField};
use crate::grid::{GridSpec, ScalarGrid};
use crate::{Error, Result};

/// Vector field given by one [`ScalarGrid`] per component, multilinearly
/// interpolated between cell centres.
#[derive(Debug, Clone)]
pub struct TabulatedVector {
    components: Vec<ScalarGrid>,
    line: Option<Table1d>,
    name: String,
    smoothness: Smoothness,
}

impl TabulatedVector {
    pub fn new(components: Vec<ScalarGrid>, name: impl Into<String>) -> Result<Self> {
        let d = components.len();
        if d == 0 || components.iter().any(|c| c.spec.dim() != d || c.spec != components[0].spec) {
            return Err(Error::param("tabulated vector field needs d components on one d-dim grid"));
        }
        let line = (d == 1).then(|| Table1d::new(&components[0]));
        Ok(Self { components, line, name: name.into(), smoothness: Smoothness::GridTabulated })
    }

    /// Samples `field` at the cell centres of `spec`.
    pub fn tabulate(field: &dyn VectorField, spec: &GridSpec) -> Result<Self> {
        let d = field.dim();
        if spec.dim() != d {
            return Err(Error::param(format!("grid is {}-dimensional, field lives in R^{d}", spec.dim())));
        }
        use rayon::prelude::*;
        let rows: Vec<Vec<f64>> = (0..spec.len())
            .into_par_iter()
            .map(|i| {
                let mut out = vec![0.0; d];
                field.eval(&spec.center(i), &mut out);
                out
            })
            .collect();
        let components = (0..d)
            .map(|c| ScalarGrid { spec: spec.clone(), values: rows.iter().map(|r| r[c]).collect() })
            .collect();
        Self::new(components, format!("tabulated({})", field.name()))
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let (spec, columns) = read_lattice_csv(path)?;
        let d = spec.dim();
        if columns.len() != d {
            return Err(Error::param(format!("drift CSV needs {d} value columns, found {}", columns.len())));
        }
        let comps = columns.into_iter().map(|v| ScalarGrid { spec: spec.clone(), values: v }).collect();
        Self::new(comps, format!("csv:{}", path.display()))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.components[0].spec
    }

    /// Relabels the table, e.g. as a fine sampling of a mollified field.
    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }
}

impl VectorField for TabulatedVector {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        if let Some(t) = &self.line {
            out[0] = t.eval(x[0]);
            return;
        }
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.interpolate(x);
        }
    }

    fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Cell-centred 1-d table with the affine index map precomputed.
#[derive(Debug, Clone)]
struct Table1d {
    offset: f64,
    scale: f64,
    last: f64,
    values: Vec<f64>,
}

impl Table1d {
    fn new(g: &ScalarGrid) -> Self {
        let n = g.values.len();
        let scale = n as f64 / (g.spec.upper[0] - g.spec.lower[0]);
        Self { offset: -g.spec.lower[0] * scale - 0.5, scale, last: (n - 1) as f64, values: g.values.clone() }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let t = x * self.scale + self.offset;
        if !(t > 0.0) {
            return self.values[0];
        }
        if t >= self.last {
            return self.values[self.values.len() - 1];
        }
        let i = t as usize;
        let f = t - i as f64;
        let (a, b) = (self.values[i], self.values[i + 1]);
        a + f * (b - a)
    }
}

/// Matrix field tabulated on a grid: one [`ScalarGrid`] per entry.
#[derive(Debug, Clone)]
pub struct TabulatedMatrix {
    entries: Vec<ScalarGrid>,
    lines: Vec<Table1d>,
    rows: usize,
    cols: usize,
    name: String,
    smoothness: Smoothness,
}

impl TabulatedMatrix {
    pub fn tabulate(field: &dyn MatrixField, spec: &GridSpec) -> Result<Self> {
        let (d, m) = (field.rows(), field.cols());
        if spec.dim() != d {
            return Err(Error::param("grid dimension does not match sigma rows"));
        }
        use rayon::prelude::*;
        let rows: Vec<Vec<f64>> = (0..spec.len())
            .into_par_iter()
            .map(|i| {
                let mut out = vec![0.0; d * m];
                field.eval(&spec.center(i), &mut out);
                out
            })
            .collect();
        let entries: Vec<ScalarGrid> = (0..d * m)
            .map(|c| ScalarGrid { spec: spec.clone(), values: rows.iter().map(|r| r[c]).collect() })
            .collect();
        Ok(Self {
            lines: if d == 1 { entries.iter().map(Table1d::new).collect() } else { Vec::new() },
            entries,
            rows: d,
            cols: m,
            name: format!("tabulated({})", field.name()),
            smoothness: Smoothness::GridTabulated,
        })
    }

    /// CSV with `d` coordinate columns then `d * m` entries in row-major order.
    pub fn from_csv(path: &Path, cols: usize) -> Result<Self> {
        let (spec, columns) = read_lattice_csv(path)?;
        let d = spec.dim();
        if columns.len() != d * cols {
            return Err(Error::param(format!(
                "sigma CSV needs {} value columns for a {d}x{cols} matrix, found {}",
                d * cols,
                columns.len()
            )));
        }
        let entries: Vec<ScalarGrid> = columns.into_iter().map(|v| ScalarGrid { spec: spec.clone(), values: v }).collect();
        Ok(Self {
            lines: if d == 1 { entries.iter().map(Table1d::new).collect() } else { Vec::new() },
            entries,
            rows: d,
            cols,
            name: format!("csv:{}", path.display()),
            smoothness: Smoothness::GridTabulated,
        })
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }
}

impl MatrixField for TabulatedMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        if !self.lines.is_empty() {
            for (o, t) in out.iter_mut().zip(&self.lines) {
                *o = t.eval(x[0]);
            }
            return;
        }
        for (o, e) in out.iter_mut().zip(&self.entries) {
            *o = e.interpolate(x);
        }
    }

    fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Reads a CSV whose header names coordinate columns `x0, x1, ...`
/// (any header starting with `x`) followed by value columns. The rows must
/// cover a full uniform lattice; row order is free.
fn read_lattice_csv(path: &Path) -> Result<(GridSpec, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let d = headers.iter().take_while(|h| h.trim().starts_with('x')).count();
    if d == 0 || d > 3 || headers.len() <= d {
        return Err(Error::param(format!(
            "{}: header must list 1..=3 coordinate columns (x...) then values",
            path.display()
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::param(format!("{}: {e}", path.display())))?;
        if row.len() != headers.len() {
            return Err(Error::param(format!("{}: ragged row", path.display())));
        }
        rows.push(row);
    }
    let key = |v: f64| (v * 1e9).round() as i64;
    let mut axes = Vec::with_capacity(d);
    for a in 0..d {
        let set: BTreeSet<i64> = rows.iter().map(|r| key(r[a])).collect();
        let coords: Vec<f64> = set.into_iter().map(|k| k as f64 * 1e-9).collect();
        if coords.len() < 2 {
            return Err(Error::param(format!("{}: axis {a} needs two distinct coordinates", path.display())));
        }
        let h = coords[1] - coords[0];
        if coords.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h) {
            return Err(Error::param(format!("{}: axis {a} is not uniformly spaced", path.display())));
        }
        axes.push((coords[0], h, coords.len()));
    }
    let spec = GridSpec::new(
        axes.iter().map(|(c0, h, _)| c0 - 0.5 * h).collect(),
        axes.iter().map(|(c0, h, n)| c0 + (*n as f64 - 0.5) * h).collect(),
        axes.iter().map(|a| a.2).collect(),
    )?;
    if rows.len() != spec.len() {
        return Err(Error::param(format!(
            "{}: {} rows do not fill a {:?} lattice",
            path.display(),
            rows.len(),
            spec.resolution
        )));
    }
    let nv = headers.len() - d;
    let mut columns = vec![vec![f64::NAN; spec.len()]; nv];
    for r in &rows {
        let idx: Vec<usize> = (0..d).map(|a| ((r[a] - axes[a].0) / axes[a].1).round() as usize).collect();
        let flat = spec.ravel(&idx);
        for c in 0..nv {
            columns[c][flat] = r[d + c];
        }
    }
    if columns.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::param(format!("{}: lattice has duplicate or missing points", path.display())));
    }
    Ok((spec, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn csv_lattice_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "x0,x1,b0,b1").unwrap();
        for j in (0..4).rev() {
            for i in 0..3 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.25);
                writeln!(f, "{x},{y},{},{}", x + y, x - y).unwrap();
            }
        }
        drop(f);
        let t = TabulatedVector::from_csv(&path).unwrap();
        assert_eq!(t.grid().resolution, vec![3, 4]);
        let mut out = [0.0; 2];
        t.eval(&[0.7, 0.3], &mut out);
        assert!((out[0] - 1.0).abs() < 1e-12 && (out[1] - 0.4).abs() < 1e-12);
        assert_eq!(t.smoothness(), Smoothness::GridTabulated);
    }

    #[test]
    fn ragged_lattice_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        std::fs::write(&path, "x0,b\n0,1\n1,2\n3,4\n").unwrap();
        assert!(TabulatedVector::from_csv(&path).is_err());
    }
}
