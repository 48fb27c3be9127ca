//! Reference measures, pushforward densities `K_t = d(X_t # mu) / d mu`
//! and the explicit bound on `E K_t^p`.

mod kde;
mod measure;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kde::{central_region, kde, linear_binning, silverman_bandwidth, smooth_masses};
pub use measure::{MeasureKind, WeightedMeasure};

use crate::fields::{sigma_gradient_fd, CoefficientPair};
use crate::flow::FlowEnsemble;
use crate::grid::{GridSpec, ScalarGrid};
use crate::stats::{pairwise_sum, MeanEstimate};
use crate::{Error, Result};

/// Fraction of mass defining the central cells.
pub const CENTRAL_MASS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    Pushforward,
    Pde,
}

/// Cell values on a grid with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub time: f64,
    pub kind: DensityKind,
    /// What the values are, e.g. `"K"` or `"law"`.
    pub quantity: String,
    pub bandwidth: Vec<f64>,
    /// Mass of the law inside the box.
    pub mass: f64,
    /// Mass that left the box or was smoothed past its edge.
    pub leakage: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    lower: &'a [f64],
    upper: &'a [f64],
    resolution: &'a [usize],
    t: f64,
    kind: DensityKind,
    quantity: &'a str,
    bandwidth: &'a [f64],
    mass: f64,
    leakage: f64,
}

impl DensityGrid {
    pub fn as_scalar(&self) -> ScalarGrid {
        ScalarGrid { spec: self.spec.clone(), values: self.values.clone() }
    }

    /// CSV `x1..xd,value` plus a JSON sidecar next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let d = self.spec.dim();
        let mut w = csv::Writer::from_path(csv_path)?;
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.spec.center(i).iter().map(|c| format!("{c:.17e}")).collect();
            row.push(format!("{v:.17e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        let side = Sidecar {
            lower: &self.spec.lower,
            upper: &self.spec.upper,
            resolution: &self.spec.resolution,
            t: self.time,
            kind: self.kind,
            quantity: &self.quantity,
            bandwidth: &self.bandwidth,
            mass: self.mass,
            leakage: self.leakage,
        };
        let mut f = File::create(csv_path.with_extension("json"))?;
        f.write_all(serde_json::to_string_pretty(&side)?.as_bytes())?;
        Ok(())
    }
}

/// Snapshot index of time `t` in the ensemble.
pub fn snapshot_at(e: &FlowEnsemble, t: f64) -> Result<usize> {
    let grid = e.grid();
    let k = (t / grid.dt()).round();
    if !(k >= 0.0) || (k * grid.dt() - t).abs() > 1e-9 * grid.t_end.max(1.0) {
        return Err(Error::param(format!("t = {t} is not on the ensemble time grid")));
    }
    e.snapshot_of(k as usize)
        .ok_or_else(|| Error::param(format!("t = {t} was not recorded")))
}

fn path_sample(e: &FlowEnsemble, path: usize, snap: usize) -> Vec<f64> {
    let np = e.n_particles();
    (path * np..(path + 1) * np).flat_map(|t| e.state(t, snap).to_vec()).collect()
}

/// Silverman bandwidth from one path's sample, or from all paths pooled.
fn resolve_bandwidth(e: &FlowEnsemble, snap: usize, bandwidth: Option<&[f64]>, pooled: bool) -> Result<Vec<f64>> {
    if let Some(h) = bandwidth {
        return Ok(h.to_vec());
    }
    let h = if pooled {
        let pts: Vec<f64> = (0..e.n_trajectories()).flat_map(|t| e.state(t, snap).to_vec()).collect();
        let w: Vec<f64> = (0..e.n_trajectories()).map(|t| e.weight(t)).collect();
        silverman_bandwidth(&pts, &w, e.dim())
    } else {
        silverman_bandwidth(&path_sample(e, 0, snap), e.starts().weights(), e.dim())
    };
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Numeric("degenerate sample: Silverman bandwidth is zero".into()));
    }
    Ok(h)
}

/// Law of `X_t` over all paths and weighted particles, by KDE.
pub fn pushforward_law(e: &FlowEnsemble, t: f64, grid: &GridSpec, bandwidth: Option<&[f64]>) -> Result<DensityGrid> {
    if e.n_trajectories() == 0 {
        return Err(Error::param("empty ensemble"));
    }
    if grid.dim() != e.dim() {
        return Err(Error::param("grid dimension differs from the flow"));
    }
    let snap = snapshot_at(e, t)?;
    let h = resolve_bandwidth(e, snap, bandwidth, true)?;
    let per_path: Vec<(Vec<f64>, f64)> = (0..e.n_paths())
        .into_par_iter()
        .map(|p| kde(&path_sample(e, p, snap), e.starts().weights(), grid, &h))
        .collect::<Result<_>>()?;
    let np = e.n_paths() as f64;
    let values: Vec<f64> = (0..grid.len())
        .map(|c| pairwise_sum(&per_path.iter().map(|(v, _)| v[c]).collect::<Vec<_>>()) / np)
        .collect();
    let leakage = pairwise_sum(&per_path.iter().map(|(_, l)| *l).collect::<Vec<_>>()) / np;
    let mass = pairwise_sum(&values) * grid.cell_volume();
    Ok(DensityGrid {
        spec: grid.clone(),
        values,
        time: t,
        kind: DensityKind::Pushforward,
        quantity: "law".into(),
        bandwidth: h,
        mass,
        leakage,
    })
}

/// `E K_t` against an arbitrary reference density (zero where it vanishes).
pub fn pushforward_density_with(
    e: &FlowEnsemble,
    reference: &(dyn Fn(&[f64]) -> f64 + Sync),
    t: f64,
    grid: &GridSpec,
    bandwidth: Option<&[f64]>,
) -> Result<DensityGrid> {
    let mut law = pushforward_law(e, t, grid, bandwidth)?;
    for (i, v) in law.values.iter_mut().enumerate() {
        let r = reference(&grid.center(i));
        *v = if r > 0.0 { *v / r } else { 0.0 };
    }
    law.quantity = "K".into();
    Ok(law)
}

/// `E K_t` on the cells of `grid`.
pub fn pushforward_density(
    e: &FlowEnsemble,
    mu: &WeightedMeasure,
    t: f64,
    grid: &GridSpec,
    bandwidth: Option<&[f64]>,
) -> Result<DensityGrid> {
    pushforward_density_with(e, &|x| mu.density(x), t, grid, bandwidth)
}

/// Per-cell Monte Carlo estimate of `E K_t^p` from per-path KDEs.
#[derive(Debug, Clone, Serialize)]
pub struct KMoments {
    pub p: f64,
    pub time: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Average law mass per cell, used to pick the central region.
    pub law_mass: Vec<f64>,
    pub leakage: f64,
    pub bandwidth: Vec<f64>,
}

pub fn k_moments(
    e: &FlowEnsemble,
    mu: &WeightedMeasure,
    p: f64,
    t: f64,
    grid: &GridSpec,
    bandwidth: Option<&[f64]>,
) -> Result<KMoments> {
    if e.n_trajectories() == 0 {
        return Err(Error::param("empty ensemble"));
    }
    if !(p >= 1.0) {
        return Err(Error::param("moment order p must be >= 1"));
    }
    let snap = snapshot_at(e, t)?;
    let h = resolve_bandwidth(e, snap, bandwidth, false)?;
    let reference: Vec<f64> = (0..grid.len()).map(|i| mu.density(&grid.center(i))).collect();
    let vol = grid.cell_volume();
    let per_path: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..e.n_paths())
        .into_par_iter()
        .map(|path| {
            let (law, leak) = kde(&path_sample(e, path, snap), e.starts().weights(), grid, &h)?;
            let kp = law
                .iter()
                .zip(&reference)
                .map(|(l, r)| if *r > 0.0 { (l / r).powf(p) } else { 0.0 })
                .collect();
            let mass = law.iter().map(|v| v * vol).collect();
            Ok((kp, mass, leak))
        })
        .collect::<Result<_>>()?;
    let np = e.n_paths() as f64;
    let mut mean = vec![0.0; grid.len()];
    let mut stderr = vec![0.0; grid.len()];
    let mut law_mass = vec![0.0; grid.len()];
    for c in 0..grid.len() {
        let est = MeanEstimate::from_samples(&per_path.iter().map(|(k, _, _)| k[c]).collect::<Vec<_>>());
        mean[c] = est.mean;
        stderr[c] = if est.stderr.is_finite() { est.stderr } else { 0.0 };
        law_mass[c] = pairwise_sum(&per_path.iter().map(|(_, m, _)| m[c]).collect::<Vec<_>>()) / np;
    }
    let leakage = pairwise_sum(&per_path.iter().map(|(_, _, l)| *l).collect::<Vec<_>>()) / np;
    Ok(KMoments { p, time: t, mean, stderr, law_mass, leakage, bandwidth: h })
}

/// How derivatives of the coefficients are obtained for the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Analytic first derivatives where the fields provide them, central
    /// differences at the grid step otherwise and for second derivatives.
    #[default]
    Auto,
    /// Central differences for everything.
    FiniteDifference,
    /// No differencing at all: sigma must be constant and div b analytic.
    Exact,
}

/// `p/2 |div sigma|^2 - div b + sum_k sum_ij [1/2 d_i s^{jk} d_j s^{ik} + s^{ik} d_ij s^{jk}]`
/// at the cell centres, with `(div sigma)_k = sum_i d_i s^{ik}`.
pub fn bound_bracket(pair: &CoefficientPair, p: f64, grid: &GridSpec, mode: DerivativeMode) -> Result<ScalarGrid> {
    let (d, m) = (pair.dim(), pair.noise_dim());
    if grid.dim() != d {
        return Err(Error::param("grid dimension differs from the pair"));
    }
    let h = grid.steps().into_iter().fold(f64::INFINITY, f64::min);
    let constant = pair.sigma.is_constant();
    if mode == DerivativeMode::Exact {
        let probe = grid.center(0);
        if !constant || pair.drift.divergence(&probe).is_none() {
            return Err(Error::Capability(
                "derivative data missing and finite differences disabled".into(),
            ));
        }
    }
    let grad_at = |x: &[f64], out: &mut [f64]| {
        if constant {
            out.fill(0.0);
        } else if mode == DerivativeMode::FiniteDifference || !pair.sigma.gradient(x, out) {
            sigma_gradient_fd(pair.sigma.as_ref(), x, h, out);
        }
    };
    let div_sigma = |g: &[f64], k: usize| (0..d).map(|i| g[(i * d + i) * m + k]).sum::<f64>();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let x = grid.center(c);
            let mut g = vec![0.0; d * d * m];
            grad_at(&x, &mut g);
            let sig = pair.sigma_at(&x);
            let div_b = match (mode, pair.drift.divergence(&x)) {
                (DerivativeMode::FiniteDifference, _) | (_, None) => crate::fields::divergence_fd(pair.drift.as_ref(), &x, h),
                (_, Some(v)) => v,
            };
            let mut bracket = -div_b;
            for k in 0..m {
                bracket += 0.5 * p * div_sigma(&g, k).powi(2);
                for i in 0..d {
                    for j in 0..d {
                        bracket += 0.5 * g[(i * d + j) * m + k] * g[(j * d + i) * m + k];
                    }
                }
            }
            if !constant {
                // sum_j d_ij s^{jk} = d_i (div sigma)_k
                let (mut gp, mut gm) = (vec![0.0; d * d * m], vec![0.0; d * d * m]);
                let mut y = x.clone();
                for i in 0..d {
                    y[i] = x[i] + h;
                    grad_at(&y, &mut gp);
                    y[i] = x[i] - h;
                    grad_at(&y, &mut gm);
                    y[i] = x[i];
                    for k in 0..m {
                        let dd = (div_sigma(&gp, k) - div_sigma(&gm, k)) / (2.0 * h);
                        bracket += sig[i * m + k] * dd;
                    }
                }
            }
            bracket
        })
        .collect();
    ScalarGrid::from_values(grid.clone(), values)
}

/// `exp{p T sup_grid (bracket)^+}`.
pub fn density_bound_rhs(pair: &CoefficientPair, p: f64, t_end: f64, grid: &GridSpec, mode: DerivativeMode) -> Result<f64> {
    if !(p >= 1.0) || !(t_end >= 0.0) {
        return Err(Error::param("need p >= 1 and T >= 0"));
    }
    let b = bound_bracket(pair, p, grid, mode)?;
    let sup = b.values.iter().fold(0.0f64, |a, v| a.max(*v));
    Ok((p * t_end * sup).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityBoundReport {
    pub p: f64,
    pub t: f64,
    pub t_end: f64,
    /// `sup` over central cells of the estimated `E K_t^p`.
    pub empirical_sup: f64,
    pub stderr_at_sup: f64,
    pub central_min: f64,
    pub central_cells: usize,
    pub bound: f64,
    pub slack: f64,
    pub leakage: f64,
    pub bandwidth: Vec<f64>,
    pub passes: bool,
}

/// Compares the central-cell sup of `E K_t^p` with the bound at horizon `T`.
#[allow(clippy::too_many_arguments)]
pub fn density_bound_check(
    pair: &CoefficientPair,
    e: &FlowEnsemble,
    mu: &WeightedMeasure,
    p: f64,
    t: f64,
    grid: &GridSpec,
    bandwidth: Option<&[f64]>,
    slack: f64,
) -> Result<DensityBoundReport> {
    let t_end = e.grid().t_end;
    let bound = density_bound_rhs(pair, p, t_end, grid, DerivativeMode::Auto)?;
    let km = k_moments(e, mu, p, t, grid, bandwidth)?;
    let central = central_region(&km.law_mass, CENTRAL_MASS);
    let mut sup = f64::NEG_INFINITY;
    let mut at = 0;
    let mut min = f64::INFINITY;
    let mut count = 0;
    for (c, keep) in central.iter().enumerate() {
        if *keep {
            count += 1;
            min = min.min(km.mean[c]);
            if km.mean[c] > sup {
                sup = km.mean[c];
                at = c;
            }
        }
    }
    let stderr_at_sup = km.stderr[at];
    Ok(DensityBoundReport {
        p,
        t,
        t_end,
        empirical_sup: sup,
        stderr_at_sup,
        central_min: min,
        central_cells: count,
        bound,
        slack,
        leakage: km.leakage,
        bandwidth: km.bandwidth,
        passes: sup <= bound * (1.0 + slack) + 3.0 * stderr_at_sup,
    })
}
