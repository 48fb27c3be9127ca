//! Time stepping of `d_t u = L* u`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::duality::DualityReport;
use super::generator::{Boundary, GeneratorGrid};
use super::sparse::{bicgstab, Csr};
use crate::density::{DensityGrid, DensityKind};
use crate::grid::ScalarGrid;
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// Relative residual at which implicit solves stop.
pub const SOLVER_TOLERANCE: f64 = 1e-13;
const MAX_ITERATIONS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpeScheme {
    ExplicitEuler,
    ImplicitEuler,
    CrankNicolson,
}

impl FpeScheme {
    fn theta(self) -> f64 {
        match self {
            FpeScheme::ExplicitEuler => 0.0,
            FpeScheme::ImplicitEuler => 1.0,
            FpeScheme::CrankNicolson => 0.5,
        }
    }
}

/// Repeated steps of one scheme with a fixed `dt`, operators built once.
pub struct AdjointStepper<'a> {
    grid: &'a GeneratorGrid,
    scheme: FpeScheme,
    dt: f64,
    lhs: Option<Csr>,
    scratch: Vec<f64>,
    rhs: Vec<f64>,
    pub iterations: usize,
}

impl<'a> AdjointStepper<'a> {
    pub fn new(grid: &'a GeneratorGrid, dt: f64, scheme: FpeScheme) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt must be positive"));
        }
        if scheme == FpeScheme::ExplicitEuler {
            let admissible = grid.explicit_dt_limit();
            if dt > admissible * (1.0 + 1e-12) {
                return Err(Error::Cfl { dt, admissible });
            }
        }
        let theta = scheme.theta();
        let lhs = (theta > 0.0).then(|| grid.adjoint_matrix().shifted(1.0, -theta * dt));
        let n = grid.spec().len();
        Ok(Self { grid, scheme, dt, lhs, scratch: vec![0.0; n], rhs: vec![0.0; n], iterations: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> FpeScheme {
        self.scheme
    }

    /// `u <- u + dt L* (theta u_new + (1 - theta) u)`.
    pub fn step(&mut self, u: &mut [f64]) -> Result<()> {
        let theta = self.scheme.theta();
        self.grid.adjoint_matrix().matvec(u, &mut self.scratch);
        let explicit = (1.0 - theta) * self.dt;
        for (r, (&v, &l)) in self.rhs.iter_mut().zip(u.iter().zip(&self.scratch)) {
            *r = v + explicit * l;
        }
        match &self.lhs {
            None => u.copy_from_slice(&self.rhs),
            Some(m) => {
                let st = bicgstab(m, &self.rhs, u, SOLVER_TOLERANCE, MAX_ITERATIONS)?;
                self.iterations += st.iterations;
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("FPE state became non-finite".into()));
        }
        Ok(())
    }
}

/// One step of `d_t u = L* u`.
pub fn step_adjoint(grid: &GeneratorGrid, u: &DensityGrid, dt: f64, scheme: FpeScheme) -> Result<DensityGrid> {
    if u.spec != *grid.spec() {
        return Err(Error::param("density lives on a different grid than the generator"));
    }
    let mut stepper = AdjointStepper::new(grid, dt, scheme)?;
    let mut v = u.values.clone();
    stepper.step(&mut v)?;
    let mass = grid.mass(&v);
    Ok(DensityGrid {
        spec: u.spec.clone(),
        values: v,
        time: u.time + dt,
        kind: DensityKind::Pde,
        quantity: u.quantity.clone(),
        bandwidth: vec![],
        mass,
        leakage: u.mass - mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub t_end: f64,
    /// Requested step; shortened so that it divides `t_end`.
    pub dt: f64,
    pub scheme: FpeScheme,
    /// Snapshot times besides 0 and `t_end`.
    #[serde(default)]
    pub record: Vec<f64>,
}

/// Snapshots of a discrete solution of `d_t u = L* u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSolutionPath {
    /// Clipped at zero; `mass` and `leakage` refer to the unclipped state.
    pub snapshots: Vec<DensityGrid>,
    pub scheme: FpeScheme,
    pub dt: f64,
    pub boundary: Boundary,
    /// Negative mass removed from each snapshot.
    pub clipped_mass: Vec<f64>,
    /// Snapshots that needed clipping.
    pub clip_events: usize,
    pub sup_l1: f64,
    pub sup_linf: f64,
    pub upwind_cells: usize,
    pub solver_iterations: usize,
    pub note: String,
}

/// The solution lives on a box with the stated boundary rule, a truncation
/// of the whole-space problem.
pub const BOX_NOTE: &str = "solved on a bounded box; whole-space statements are tested on this truncation";

impl WeakSolutionPath {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &DensityGrid {
        self.snapshots.last().expect("a solution has at least the initial snapshot")
    }

    /// CSV with `time, mass, linf, l1, clipped_mass` and one
    /// `duality_gap_<name>` column per test function of `duality`.
    pub fn write_report(&self, path: &Path, duality: Option<&DualityReport>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let names: Vec<String> = duality.map(|r| r.function_names()).unwrap_or_default();
        let mut header: Vec<String> = ["time", "mass", "linf", "l1", "clipped_mass"].iter().map(|s| s.to_string()).collect();
        header.extend(names.iter().map(|n| format!("duality_gap_{n}")));
        w.write_record(&header)?;
        for (s, clipped) in self.snapshots.iter().zip(&self.clipped_mass) {
            let vol = s.spec.cell_volume();
            let l1 = pairwise_sum(&s.values.iter().map(|v| v.abs()).collect::<Vec<_>>()) * vol;
            let linf = s.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut rec = vec![s.time.to_string(), s.mass.to_string(), linf.to_string(), l1.to_string(), clipped.to_string()];
            for n in &names {
                let gap = duality.and_then(|r| r.gap(n, s.time)).map_or(String::new(), |g| g.to_string());
                rec.push(gap);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates from `u0` up to `t_end`.
pub fn solve(grid: &GeneratorGrid, u0: &ScalarGrid, opts: &SolveOptions) -> Result<WeakSolutionPath> {
    if u0.spec != *grid.spec() {
        return Err(Error::param("initial density lives on a different grid than the generator"));
    }
    if !(opts.t_end > 0.0) || !(opts.dt > 0.0) {
        return Err(Error::param("t_end and dt must be positive"));
    }
    let steps = (opts.t_end / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = opts.t_end / steps as f64;
    let mut record = vec![0usize, steps];
    for &t in &opts.record {
        if !(0.0..=opts.t_end).contains(&t) {
            return Err(Error::param(format!("snapshot time {t} outside [0, {}]", opts.t_end)));
        }
        record.push((t / dt).round() as usize);
    }
    record.sort_unstable();
    record.dedup();

    let mut stepper = AdjointStepper::new(grid, dt, opts.scheme)?;
    let mut u = u0.values.clone();
    let mass0 = grid.mass(&u);
    let mut path = WeakSolutionPath {
        snapshots: Vec::with_capacity(record.len()),
        scheme: opts.scheme,
        dt,
        boundary: grid.boundary(),
        clipped_mass: Vec::with_capacity(record.len()),
        clip_events: 0,
        sup_l1: 0.0,
        sup_linf: 0.0,
        upwind_cells: grid.upwind_count(),
        solver_iterations: 0,
        note: BOX_NOTE.to_string(),
    };
    let mut next = 0;
    for k in 0..=steps {
        if k > 0 {
            stepper.step(&mut u)?;
        }
        let vol = grid.spec().cell_volume();
        let l1 = pairwise_sum(&u.iter().map(|v| v.abs()).collect::<Vec<_>>()) * vol;
        path.sup_l1 = path.sup_l1.max(l1);
        path.sup_linf = path.sup_linf.max(u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if next < record.len() && record[next] == k {
            next += 1;
            let mass = grid.mass(&u);
            let negative: Vec<f64> = u.iter().map(|v| (-v).max(0.0)).collect();
            let clipped = pairwise_sum(&negative) * vol;
            if clipped > 0.0 {
                path.clip_events += 1;
            }
            path.clipped_mass.push(clipped);
            path.snapshots.push(DensityGrid {
                spec: grid.spec().clone(),
                values: u.iter().map(|v| v.max(0.0)).collect(),
                time: k as f64 * dt,
                kind: DensityKind::Pde,
                quantity: "u".into(),
                bandwidth: vec![],
                mass,
                leakage: mass0 - mass,
            });
        }
    }
    path.solver_iterations = stepper.iterations;
    Ok(path)
}

/// Mass, mean and covariance (row-major `d x d`) of a grid density.
pub fn grid_moments(u: &DensityGrid) -> (f64, Vec<f64>, Vec<f64>) {
    let d = u.spec.dim();
    let vol = u.spec.cell_volume();
    let n = u.spec.len();
    let mass = pairwise_sum(&u.values) * vol;
    let centres: Vec<Vec<f64>> = (0..n).map(|k| u.spec.center(k)).collect();
    let mean: Vec<f64> = (0..d)
        .map(|i| pairwise_sum(&(0..n).map(|k| centres[k][i] * u.values[k]).collect::<Vec<_>>()) * vol / mass)
        .collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let terms: Vec<f64> =
                (0..n).map(|k| (centres[k][i] - mean[i]) * (centres[k][j] - mean[j]) * u.values[k]).collect();
            cov[i * d + j] = pairwise_sum(&terms) * vol / mass;
        }
    }
    (mass, mean, cov)
}

/// `sum |f - g| h^d` on a shared grid.
pub fn l1_distance(f: &[f64], g: &[f64], cell_volume: f64) -> f64 {
    pairwise_sum(&f.iter().zip(g).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()) * cell_volume
}
