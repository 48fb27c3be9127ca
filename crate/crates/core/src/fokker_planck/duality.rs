//! Particle/PDE duality `int phi u_t dx = E phi(X_t)` and the
//! two-discretization uniqueness experiment.

use serde::{Deserialize, Serialize};

use super::generator::{Boundary, GeneratorGrid};
use super::solve::{l1_distance, solve, FpeScheme, SolveOptions, WeakSolutionPath};
use crate::density::snapshot_at;
use crate::fields::CoefficientPair;
use crate::flow::{path_average, FlowEnsemble};
use crate::grid::{GridSpec, ScalarGrid};
use crate::{Error, Result};

/// Relative grid budget added to the Monte Carlo tolerance.
pub const GRID_BUDGET: f64 = 0.01;

/// A named test function sampled on the PDE grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub values: ScalarGrid,
}

impl TestFunction {
    pub fn from_fn(name: &str, spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        Self { name: name.to_string(), values: ScalarGrid::from_fn(spec, f) }
    }

    /// Interpolated value, zero outside the box.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.values.spec.contains(x) {
            self.values.interpolate(x)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub function: String,
    pub time: f64,
    pub pde: f64,
    pub particles: f64,
    pub stderr: f64,
    pub gap: f64,
    /// `3 stderr + budget |pde|`.
    pub tolerance: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub rows: Vec<DualityRow>,
    pub max_relative: f64,
    pub grid_budget: f64,
    pub all_within: bool,
}

impl DualityReport {
    pub fn function_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.function) {
                names.push(r.function.clone());
            }
        }
        names
    }

    pub fn gap(&self, function: &str, time: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.function == function && (r.time - time).abs() <= 1e-9 * time.abs().max(1.0))
            .map(|r| r.particles - r.pde)
    }
}

/// Compares `<phi, u_t>` with the particle mean of `phi(X_t)` at every
/// snapshot of `path`.
pub fn duality_check(
    grid: &GeneratorGrid,
    e: &FlowEnsemble,
    path: &WeakSolutionPath,
    tests: &[TestFunction],
    grid_budget: f64,
) -> Result<DualityReport> {
    if e.dim() != grid.dim() {
        return Err(Error::param("ensemble and PDE live in different dimensions"));
    }
    if (e.grid().t_end - path.last().time).abs() > 1e-9 * e.grid().t_end.max(1.0) {
        log::warn!("duality check: ensemble horizon {} differs from PDE horizon {}", e.grid().t_end, path.last().time);
    }
    for t in tests {
        if t.values.spec != *grid.spec() {
            return Err(Error::param(format!("test function {} lives on a different grid", t.name)));
        }
    }
    let mut rows = Vec::new();
    for snap in &path.snapshots {
        let s = snapshot_at(e, snap.time)?;
        for t in tests {
            let pde = grid.inner(&t.values.values, &snap.values);
            let vals: Vec<f64> = (0..e.n_trajectories()).map(|tr| t.eval(e.state(tr, s))).collect();
            let mc = path_average(&vals, e.starts().weights(), e.n_paths());
            let gap = (mc.mean - pde).abs();
            let tolerance = 3.0 * mc.stderr + grid_budget * pde.abs();
            rows.push(DualityRow {
                function: t.name.clone(),
                time: snap.time,
                pde,
                particles: mc.mean,
                stderr: mc.stderr,
                gap,
                tolerance,
                within: gap <= tolerance,
            });
        }
    }
    let max_relative = rows.iter().fold(0.0f64, |m, r| m.max(r.gap / r.pde.abs().max(f64::MIN_POSITIVE)));
    let all_within = rows.iter().all(|r| r.within);
    Ok(DualityReport { rows, max_relative, grid_budget, all_within })
}

/// One discretization of the FPE: scheme, grid refinement and step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub scheme: FpeScheme,
    /// Cells per cell of the base grid along each axis.
    pub refine: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    /// `|u^A_t - u^B_t|_{L1}` on the coarser grid.
    pub l1: Vec<f64>,
    pub sup_l1: f64,
    pub sup_mass: [f64; 2],
    pub sup_linf: [f64; 2],
    pub note: String,
}

/// Cell averages of a density refined by `factor` onto the base grid.
pub fn restrict(fine: &[f64], fine_spec: &GridSpec, factor: usize, base: &GridSpec) -> Vec<f64> {
    let d = base.dim();
    let mut out = vec![0.0; base.len()];
    for k in 0..fine_spec.len() {
        let idx = fine_spec.unravel(k);
        let coarse: Vec<usize> = (0..d).map(|a| idx[a] / factor).collect();
        out[base.ravel(&coarse)] += fine[k];
    }
    let inv = 1.0 / (factor as f64).powi(d as i32);
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

/// Solves the FPE with two discretizations from the same `u0` and reports
/// the L1 distance at shared snapshot times.
pub fn uniqueness_experiment(
    pair: &CoefficientPair,
    base: &GridSpec,
    boundary: Boundary,
    u0: &(dyn Fn(&[f64]) -> f64 + Sync),
    t_end: f64,
    record: &[f64],
    schemes: [Discretization; 2],
) -> Result<UniquenessReport> {
    if schemes.iter().any(|s| s.refine == 0) {
        return Err(Error::param("refinement factor must be positive"));
    }
    let mut paths: Vec<(WeakSolutionPath, usize)> = Vec::with_capacity(2);
    for s in schemes {
        let spec = base.refined(s.refine);
        let g = GeneratorGrid::new(pair, spec.clone(), boundary)?;
        let init = ScalarGrid::from_fn(spec, u0);
        let opts = SolveOptions { t_end, dt: s.dt, scheme: s.scheme, record: record.to_vec() };
        paths.push((solve(&g, &init, &opts)?, s.refine));
    }
    let common = gcd(paths[0].1, paths[1].1);
    let target = base.refined(common);
    let on_target = |p: &WeakSolutionPath, refine: usize, i: usize| {
        let f = refine / common;
        restrict(&p.snapshots[i].values, &p.snapshots[i].spec, f, &target)
    };
    let (pa, ra) = &paths[0];
    let (pb, rb) = &paths[1];
    let mut times = Vec::new();
    let mut l1 = Vec::new();
    for (i, sa) in pa.snapshots.iter().enumerate() {
        let Some(j) = pb.snapshots.iter().position(|sb| (sb.time - sa.time).abs() <= 1e-9 * t_end.max(1.0)) else {
            continue;
        };
        let fa = on_target(pa, *ra, i);
        let fb = on_target(pb, *rb, j);
        times.push(sa.time);
        l1.push(l1_distance(&fa, &fb, target.cell_volume()));
    }
    if times.is_empty() {
        return Err(Error::param("the two discretizations share no snapshot time"));
    }
    let sup_mass = |p: &WeakSolutionPath| p.snapshots.iter().fold(0.0f64, |m, s| m.max(s.mass));
    Ok(UniquenessReport {
        sup_l1: l1.iter().cloned().fold(0.0, f64::max),
        times,
        l1,
        sup_mass: [sup_mass(pa), sup_mass(pb)],
        sup_linf: [pa.sup_linf, pb.sup_linf],
        note: super::solve::BOX_NOTE.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub coarse: UniquenessReport,
    pub fine: UniquenessReport,
    pub ratio: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// Refinement ratio above which the uniqueness study fails.
pub const REFINEMENT_RATIO: f64 = 0.6;

/// Runs the experiment at `(h, dt)` and again with both discretizations
/// refined twice in space and time.
pub fn uniqueness_refinement(
    pair: &CoefficientPair,
    base: &GridSpec,
    boundary: Boundary,
    u0: &(dyn Fn(&[f64]) -> f64 + Sync),
    t_end: f64,
    record: &[f64],
    schemes: [Discretization; 2],
) -> Result<RefinementReport> {
    let coarse = uniqueness_experiment(pair, base, boundary, u0, t_end, record, schemes)?;
    let finer = schemes.map(|s| Discretization { dt: 0.5 * s.dt, ..s });
    let fine = uniqueness_experiment(pair, &base.refined(2), boundary, u0, t_end, record, finer)?;
    let ratio = fine.sup_l1 / coarse.sup_l1;
    Ok(RefinementReport { passes: ratio < REFINEMENT_RATIO, ratio, threshold: REFINEMENT_RATIO, coarse, fine })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
