use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{BrownianStore, TimeGrid};
use super::step::{norm, Scheme, Stepper};
use crate::fields::{CoefficientPair, Smoothness};
use crate::moduli::AuxiliaryFunction;
use crate::stats::{pairwise_sum, MeanEstimate};
use crate::{Error, Result};

/// Starting points with nonnegative measure weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartPoints {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl StartPoints {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() != dim * weights.len() || weights.is_empty() {
            return Err(Error::param("start points: coordinate and weight counts disagree"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("start points: weights must be >= 0 and coordinates finite"));
        }
        let total = pairwise_sum(&weights);
        if !(total > 0.0) {
            return Err(Error::param("start points: total weight is zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { dim, coords, weights })
    }

    /// Equal weights `1 / n`.
    pub fn uniform(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = coords.len().checked_div(dim).unwrap_or(0);
        Self::new(dim, coords, vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Which time steps are kept in memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RecordPolicy {
    #[default]
    Full,
    Final,
    Every(usize),
    Steps(Vec<usize>),
}

impl RecordPolicy {
    fn steps(&self, n: usize) -> Result<Vec<usize>> {
        let mut s: Vec<usize> = match self {
            RecordPolicy::Full => (0..=n).collect(),
            RecordPolicy::Final => vec![0, n],
            RecordPolicy::Every(k) if *k > 0 => (0..=n).step_by(*k).chain(std::iter::once(n)).collect(),
            RecordPolicy::Every(_) => return Err(Error::param("record interval must be >= 1")),
            RecordPolicy::Steps(v) => v.clone(),
        };
        s.sort_unstable();
        s.dedup();
        if s.last().is_some_and(|&k| k > n) {
            return Err(Error::param("record step beyond the time grid"));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IntegrateOptions {
    pub record: RecordPolicy,
    /// Freeze-on-exit radius `lambda`.
    pub stopping_radius: Option<f64>,
}

/// Trajectories of every start point on every Brownian path.
///
/// Trajectory `(path, particle)` lives at index `path * n_particles + particle`.
#[derive(Debug, Clone)]
pub struct FlowEnsemble {
    pub(crate) noise: BrownianStore,
    pub(crate) starts: StartPoints,
    pub(crate) scheme: Scheme,
    pub(crate) field_name: String,
    pub(crate) record_steps: Vec<usize>,
    /// `[trajectory][snapshot][d]`.
    pub(crate) snapshots: Vec<f64>,
    pub(crate) sup_norm: Vec<f64>,
    pub(crate) stopped_at: Vec<usize>,
    pub(crate) diverged: Vec<bool>,
    pub(crate) stopping_radius: Option<f64>,
}

impl FlowEnsemble {
    pub fn noise(&self) -> &BrownianStore {
        &self.noise
    }

    pub fn starts(&self) -> &StartPoints {
        &self.starts
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn field_name(&self) -> &str {
        &self.field_name
    }

    pub fn grid(&self) -> TimeGrid {
        self.noise.grid()
    }

    pub fn dim(&self) -> usize {
        self.starts.dim()
    }

    pub fn n_paths(&self) -> usize {
        self.noise.n_paths()
    }

    pub fn n_particles(&self) -> usize {
        self.starts.len()
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_paths() * self.n_particles()
    }

    pub fn record_steps(&self) -> &[usize] {
        &self.record_steps
    }

    pub fn stopping_radius(&self) -> Option<f64> {
        self.stopping_radius
    }

    /// Recorded state of trajectory `traj` at snapshot `s`.
    pub fn state(&self, traj: usize, s: usize) -> &[f64] {
        let (d, ns) = (self.dim(), self.record_steps.len());
        let o = (traj * ns + s) * d;
        &self.snapshots[o..o + d]
    }

    /// Snapshot index of time step `step`, if recorded.
    pub fn snapshot_of(&self, step: usize) -> Option<usize> {
        self.record_steps.binary_search(&step).ok()
    }

    /// States at the final time, `[trajectory][d]`.
    pub fn final_states(&self) -> Vec<f64> {
        let last = self.record_steps.len() - 1;
        (0..self.n_trajectories()).flat_map(|t| self.state(t, last).to_vec()).collect()
    }

    /// `||X||_{inf,T}` per trajectory, tracked at every step.
    pub fn sup_norm(&self) -> &[f64] {
        &self.sup_norm
    }

    /// First step with `|X| >= lambda`, or `N` when none.
    pub fn stopped_at(&self) -> &[usize] {
        &self.stopped_at
    }

    pub fn diverged(&self) -> &[bool] {
        &self.diverged
    }

    pub fn diverged_count(&self) -> usize {
        self.diverged.iter().filter(|d| **d).count()
    }

    /// Measure weight of each trajectory's start point.
    pub fn weight(&self, traj: usize) -> f64 {
        self.starts.weights()[traj % self.n_particles()]
    }
}

fn check_pair(pair: &CoefficientPair, starts: &StartPoints, noise: &BrownianStore, scheme: Scheme) -> Result<()> {
    if pair.dim() != starts.dim() {
        return Err(Error::param(format!("pair has d = {}, starts have d = {}", pair.dim(), starts.dim())));
    }
    if pair.noise_dim() != noise.dim_m() {
        return Err(Error::param(format!("pair has m = {}, noise has m = {}", pair.noise_dim(), noise.dim_m())));
    }
    if scheme == Scheme::Milstein1d && (pair.dim() != 1 || pair.noise_dim() != 1) {
        return Err(Error::Capability("Milstein is only offered for d = m = 1".into()));
    }
    if pair.smoothness() == Smoothness::GridTabulated {
        log::warn!("integrating grid-tabulated coefficients directly; the flow may not be well posed");
    }
    Ok(())
}

/// Integrates `dX = sigma(X) dB + b(X) dt` from every start on every path.
pub fn integrate(
    pair: &CoefficientPair,
    starts: &StartPoints,
    noise: &BrownianStore,
    scheme: Scheme,
    options: &IntegrateOptions,
) -> Result<FlowEnsemble> {
    check_pair(pair, starts, noise, scheme)?;
    if let Some(l) = options.stopping_radius {
        if !(l > 0.0) {
            return Err(Error::param("stopping radius must be positive"));
        }
    }
    let n = noise.steps();
    let record_steps = options.record.steps(n)?;
    let (d, m, dt) = (pair.dim(), noise.dim_m(), noise.dt());
    let np = starts.len();
    let lambda = options.stopping_radius.unwrap_or(f64::INFINITY);

    type PathOut = (Vec<f64>, Vec<f64>, Vec<usize>, Vec<bool>);
    let per_path: Vec<PathOut> = (0..noise.n_paths())
        .into_par_iter()
        .map(|p| {
            let db = noise.path_increments(p);
            let mut stepper = Stepper::new(pair, scheme);
            let ns = record_steps.len();
            let mut snaps = vec![0.0; np * ns * d];
            let mut sups = vec![0.0; np];
            let mut stops = vec![n; np];
            let mut divs = vec![false; np];
            let mut x = vec![0.0; d];
            for i in 0..np {
                x.copy_from_slice(starts.point(i));
                let mut sup = norm(&x);
                let mut frozen = sup >= lambda;
                if frozen {
                    stops[i] = 0;
                }
                let mut next_rec = 0;
                let out = &mut snaps[i * ns * d..(i + 1) * ns * d];
                for k in 0..=n {
                    if k > 0 && !frozen {
                        if stepper.step(&mut x, &db[(k - 1) * m..k * m], dt) {
                            let r = norm(&x);
                            sup = sup.max(r);
                            if r >= lambda {
                                frozen = true;
                                stops[i] = k;
                            }
                        } else {
                            frozen = true;
                            divs[i] = true;
                        }
                    }
                    if next_rec < ns && record_steps[next_rec] == k {
                        out[next_rec * d..(next_rec + 1) * d].copy_from_slice(&x);
                        next_rec += 1;
                    }
                }
                sups[i] = sup;
            }
            (snaps, sups, stops, divs)
        })
        .collect();

    let mut ens = FlowEnsemble {
        noise: noise.clone(),
        starts: starts.clone(),
        scheme,
        field_name: pair.drift.name(),
        record_steps,
        snapshots: Vec::new(),
        sup_norm: Vec::new(),
        stopped_at: Vec::new(),
        diverged: Vec::new(),
        stopping_radius: options.stopping_radius,
    };
    for (s, u, t, v) in per_path {
        ens.snapshots.extend(s);
        ens.sup_norm.extend(u);
        ens.stopped_at.extend(t);
        ens.diverged.extend(v);
    }
    let bad = ens.diverged_count();
    if bad > 0 {
        log::warn!("{bad} trajectories diverged and were frozen at their last finite state");
    }
    Ok(ens)
}

fn check_coupled(a: &FlowEnsemble, b: &FlowEnsemble) -> Result<()> {
    if !a.noise.same_root(&b.noise) {
        return Err(Error::Coupling("ensembles were driven by different Brownian stores".into()));
    }
    if a.starts != b.starts {
        return Err(Error::Coupling("ensembles start from different points".into()));
    }
    Ok(())
}

/// `max_k |X_k - X~_k|` over the recorded steps, per trajectory.
pub fn sup_distance(a: &FlowEnsemble, b: &FlowEnsemble) -> Result<Vec<f64>> {
    check_coupled(a, b)?;
    if !a.noise.same_store(&b.noise) || a.record_steps != b.record_steps {
        return Err(Error::param("sup distance needs identical time grids and record steps"));
    }
    let ns = a.record_steps.len();
    Ok((0..a.n_trajectories())
        .map(|t| (0..ns).map(|s| dist(a.state(t, s), b.state(t, s))).fold(0.0, f64::max))
        .collect())
}

/// Sup distance between the piecewise-linear interpolants of a coarse and a
/// fine ensemble on the same Brownian path, taken over the fine grid.
pub fn sup_distance_interpolated(coarse: &FlowEnsemble, fine: &FlowEnsemble) -> Result<Vec<f64>> {
    check_coupled(coarse, fine)?;
    let (nc, nf) = (coarse.grid().steps, fine.grid().steps);
    if nf % nc != 0 || coarse.grid().t_end != fine.grid().t_end {
        return Err(Error::param("fine grid must refine the coarse grid"));
    }
    if coarse.record_steps.len() != nc + 1 || fine.record_steps.len() != nf + 1 {
        return Err(Error::param("interpolated sup distance needs full recording"));
    }
    let r = nf / nc;
    let d = coarse.dim();
    let mut y = vec![0.0; d];
    Ok((0..coarse.n_trajectories())
        .map(|t| {
            let mut sup: f64 = 0.0;
            for k in 0..=nf {
                let (j, f) = (k / r, (k % r) as f64 / r as f64);
                let lo = coarse.state(t, j);
                if f == 0.0 {
                    y.copy_from_slice(lo);
                } else {
                    let hi = coarse.state(t, j + 1);
                    for i in 0..d {
                        y[i] = lo[i] + f * (hi[i] - lo[i]);
                    }
                }
                sup = sup.max(dist(&y, fine.state(t, k)));
            }
            sup
        })
        .collect())
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Per-path sums `sum_i w_i v_{p,i}`, then mean and stderr across paths.
pub fn path_average(values: &[f64], weights: &[f64], n_paths: usize) -> MeanEstimate {
    let np = weights.len();
    debug_assert_eq!(values.len(), n_paths * np);
    let per_path: Vec<f64> = (0..n_paths)
        .map(|p| {
            let prod: Vec<f64> = values[p * np..(p + 1) * np].iter().zip(weights).map(|(v, w)| v * w).collect();
            pairwise_sum(&prod)
        })
        .collect();
    MeanEstimate::from_samples(&per_path)
}

/// `E int_{G_R} psi_delta(d^2) dmu` from per-trajectory sup distances and
/// sup norms of the two flows.
pub fn psi_functional(
    distances: &[f64],
    norm_a: &[f64],
    norm_b: &[f64],
    weights: &[f64],
    n_paths: usize,
    aux: &AuxiliaryFunction,
    level_r: f64,
) -> Result<MeanEstimate> {
    if !(level_r > 0.0) {
        return Err(Error::param("level R must be positive"));
    }
    let sq: Vec<f64> = distances.iter().map(|d| d * d).collect();
    let psi = aux.eval_many(&sq)?;
    let vals: Vec<f64> = psi
        .iter()
        .zip(norm_a.iter().zip(norm_b))
        .map(|(&v, (&na, &nb))| if na.max(nb) <= level_r { v } else { 0.0 })
        .collect();
    Ok(path_average(&vals, weights, n_paths))
}

/// `E int_{G_R} psi_delta(||X - X~||^2_{inf,T}) dmu`.
pub fn psi_stability(
    a: &FlowEnsemble,
    b: &FlowEnsemble,
    aux: &AuxiliaryFunction,
    level_r: f64,
) -> Result<MeanEstimate> {
    let d = sup_distance(a, b)?;
    psi_functional(&d, &a.sup_norm, &b.sup_norm, a.starts.weights(), a.n_paths(), aux, level_r)
}

/// `int E sup_t |X_t|^{2 q_1} dmu`.
pub fn moment_report(e: &FlowEnsemble, exponent: f64) -> Result<MeanEstimate> {
    if !(exponent > 0.0) {
        return Err(Error::param("moment exponent must be positive"));
    }
    let vals: Vec<f64> = e.sup_norm.iter().map(|r| r.powf(exponent)).collect();
    Ok(path_average(&vals, e.starts.weights(), e.n_paths()))
}

/// `E int (1 ^ d^2) dmu` from per-trajectory sup distances.
pub fn truncated_square_distance(distances: &[f64], weights: &[f64], n_paths: usize) -> MeanEstimate {
    let vals: Vec<f64> = distances.iter().map(|d| (d * d).min(1.0)).collect();
    path_average(&vals, weights, n_paths)
}
