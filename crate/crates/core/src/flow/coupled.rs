use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::{dist, path_average, StartPoints};
use super::noise::BrownianStore;
use super::step::{norm, Scheme, Stepper};
use crate::fields::CoefficientPair;
use crate::moduli::AuxiliaryFunction;
use crate::stats::MeanEstimate;
use crate::{Error, Result};

/// One flow in a coupled run: a pair integrated with `factor` noise steps
/// per step.
#[derive(Clone, Copy)]
pub struct Lane<'a> {
    pub pair: &'a CoefficientPair,
    pub factor: usize,
    pub scheme: Scheme,
}

impl<'a> Lane<'a> {
    pub fn new(pair: &'a CoefficientPair) -> Self {
        Self { pair, factor: 1, scheme: Scheme::EulerMaruyama }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CoupledOptions {
    /// Lane that the sup distances are measured against.
    pub reference: usize,
    pub stopping_radius: Option<f64>,
    /// Freeze every lane once any lane leaves the stopping ball; checked at
    /// the coarsest lane's grid points.
    pub joint_stop: bool,
}

/// Per-trajectory statistics of one lane.
#[derive(Debug, Clone, Serialize)]
pub struct LaneResult {
    pub sup_norm: Vec<f64>,
    /// Sup over the finest grid of the distance between the piecewise-linear
    /// interpolants of this lane and the reference lane.
    pub sup_distance: Vec<f64>,
    pub final_state: Vec<f64>,
    pub stopped: Vec<bool>,
    pub diverged: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledRun {
    pub n_paths: usize,
    pub weights: Vec<f64>,
    pub lanes: Vec<LaneResult>,
}

impl CoupledRun {
    pub fn diverged_count(&self) -> usize {
        self.lanes.iter().map(|l| l.diverged.iter().filter(|d| **d).count()).sum()
    }
}

struct TrajOut {
    sup_norm: f64,
    sup_distance: f64,
    stopped: bool,
    diverged: bool,
}

/// Integrates several flows on the same Brownian path in lockstep, without
/// storing trajectories.
pub fn run_coupled(
    lanes: &[Lane],
    starts: &StartPoints,
    noise: &BrownianStore,
    options: &CoupledOptions,
) -> Result<CoupledRun> {
    if lanes.is_empty() || options.reference >= lanes.len() {
        return Err(Error::param("coupled run needs lanes and a valid reference lane"));
    }
    let d = starts.dim();
    let m = noise.dim_m();
    let block = lanes.iter().map(|l| l.factor).max().unwrap_or(1);
    for l in lanes {
        if l.factor == 0 || block % l.factor != 0 {
            return Err(Error::param("lane factors must divide the largest factor"));
        }
        if l.pair.dim() != d || l.pair.noise_dim() != m {
            return Err(Error::param("lane dimensions disagree with starts or noise"));
        }
        if l.scheme == Scheme::Milstein1d && (d != 1 || m != 1) {
            return Err(Error::Capability("Milstein is only offered for d = m = 1".into()));
        }
    }
    if !noise.steps().is_multiple_of(block) {
        return Err(Error::param("largest lane factor must divide the step count"));
    }
    let lambda = options.stopping_radius.unwrap_or(f64::INFINITY);
    let n_blocks = noise.steps() / block;
    let dt = noise.dt();
    let nl = lanes.len();
    let np = starts.len();

    type PathOut = (Vec<Vec<TrajOut>>, Vec<Vec<f64>>);
    let per_path: Vec<PathOut> = (0..noise.n_paths())
        .into_par_iter()
        .map(|p| {
            let db = noise.path_increments(p);
            let mut steppers: Vec<Stepper> = lanes.iter().map(|l| Stepper::new(l.pair, l.scheme)).collect();
            // values[lane][pos][d] at fine positions 0..=block within a block
            let mut values = vec![vec![0.0; (block + 1) * d]; nl];
            let mut state = vec![vec![0.0; d]; nl];
            let mut inc = vec![0.0; m];
            let mut outs: Vec<Vec<TrajOut>> = (0..nl).map(|_| Vec::with_capacity(np)).collect();
            let mut finals: Vec<Vec<f64>> = (0..nl).map(|_| Vec::with_capacity(np * d)).collect();
            for i in 0..np {
                let x0 = starts.point(i);
                let start_out = norm(x0) >= lambda;
                let mut frozen = vec![start_out; nl];
                let mut stopped = vec![start_out; nl];
                let mut diverged = vec![false; nl];
                let mut sup_norm = vec![norm(x0); nl];
                let mut sup_dist = vec![0.0f64; nl];
                for s in state.iter_mut() {
                    s.copy_from_slice(x0);
                }
                if block == 1 {
                    lockstep(
                        &mut steppers,
                        &mut state,
                        &db,
                        m,
                        dt,
                        lambda,
                        options,
                        LaneFlags { frozen: &mut frozen, stopped: &mut stopped, diverged: &mut diverged },
                        &mut sup_norm,
                        &mut sup_dist,
                    );
                }
                for b in 0..if block == 1 { 0 } else { n_blocks } {
                    for (l, lane) in lanes.iter().enumerate() {
                        let f = lane.factor;
                        let vals = &mut values[l];
                        vals[..d].copy_from_slice(&state[l]);
                        for j in 0..block / f {
                            if !frozen[l] {
                                inc.fill(0.0);
                                for k in 0..f {
                                    let fine = b * block + j * f + k;
                                    for (a, v) in inc.iter_mut().zip(&db[fine * m..(fine + 1) * m]) {
                                        *a += v;
                                    }
                                }
                                if steppers[l].step(&mut state[l], &inc, f as f64 * dt) {
                                    let r = norm(&state[l]);
                                    sup_norm[l] = sup_norm[l].max(r);
                                    if r >= lambda && !options.joint_stop {
                                        frozen[l] = true;
                                        stopped[l] = true;
                                    }
                                } else {
                                    frozen[l] = true;
                                    diverged[l] = true;
                                }
                            }
                            let (lo, hi) = (j * f, (j + 1) * f);
                            vals[hi * d..(hi + 1) * d].copy_from_slice(&state[l]);
                            for k in lo + 1..hi {
                                let t = (k - lo) as f64 / f as f64;
                                for c in 0..d {
                                    vals[k * d + c] = vals[lo * d + c] + t * (vals[hi * d + c] - vals[lo * d + c]);
                                }
                            }
                        }
                    }
                    let rf = &values[options.reference];
                    for l in 0..nl {
                        if l == options.reference {
                            continue;
                        }
                        let v = &values[l];
                        for k in 1..=block {
                            let dd = dist(&v[k * d..(k + 1) * d], &rf[k * d..(k + 1) * d]);
                            sup_dist[l] = sup_dist[l].max(dd);
                        }
                    }
                    if options.joint_stop && state.iter().any(|s| norm(s) >= lambda) {
                        for l in 0..nl {
                            stopped[l] |= !frozen[l];
                            frozen[l] = true;
                        }
                    }
                    if frozen.iter().all(|f| *f) {
                        // remaining blocks cannot change anything
                        break;
                    }
                }
                for l in 0..nl {
                    outs[l].push(TrajOut {
                        sup_norm: sup_norm[l],
                        sup_distance: sup_dist[l],
                        stopped: stopped[l],
                        diverged: diverged[l],
                    });
                    finals[l].extend_from_slice(&state[l]);
                }
            }
            (outs, finals)
        })
        .collect();

    let mut results: Vec<LaneResult> = (0..nl)
        .map(|_| LaneResult {
            sup_norm: Vec::new(),
            sup_distance: Vec::new(),
            final_state: Vec::new(),
            stopped: Vec::new(),
            diverged: Vec::new(),
        })
        .collect();
    for (outs, finals) in per_path {
        for (l, (o, f)) in outs.into_iter().zip(finals).enumerate() {
            let r = &mut results[l];
            for t in o {
                r.sup_norm.push(t.sup_norm);
                r.sup_distance.push(t.sup_distance);
                r.stopped.push(t.stopped);
                r.diverged.push(t.diverged);
            }
            r.final_state.extend(f);
        }
    }
    let run = CoupledRun { n_paths: noise.n_paths(), weights: starts.weights().to_vec(), lanes: results };
    let bad = run.diverged_count();
    if bad > 0 {
        log::warn!("{bad} coupled trajectories diverged");
    }
    Ok(run)
}

struct LaneFlags<'a> {
    frozen: &'a mut [bool],
    stopped: &'a mut [bool],
    diverged: &'a mut [bool],
}

/// All lanes on the noise grid: no interpolation needed.
#[allow(clippy::too_many_arguments)]
fn lockstep(
    steppers: &mut [Stepper],
    state: &mut [Vec<f64>],
    db: &[f64],
    m: usize,
    dt: f64,
    lambda: f64,
    options: &CoupledOptions,
    flags: LaneFlags,
    sup_norm: &mut [f64],
    sup_dist: &mut [f64],
) {
    let nl = state.len();
    let r = options.reference;
    for inc in db.chunks_exact(m) {
        let mut any_out = false;
        let mut live = false;
        for l in 0..nl {
            if flags.frozen[l] {
                continue;
            }
            live = true;
            if steppers[l].step(&mut state[l], inc, dt) {
                let x = norm(&state[l]);
                if x > sup_norm[l] {
                    sup_norm[l] = x;
                }
                if x >= lambda {
                    any_out = true;
                    if !options.joint_stop {
                        flags.frozen[l] = true;
                        flags.stopped[l] = true;
                    }
                }
            } else {
                flags.frozen[l] = true;
                flags.diverged[l] = true;
            }
        }
        if !live {
            break;
        }
        let rs = &state[r];
        for l in 0..nl {
            let dd = dist(&state[l], rs);
            if dd > sup_dist[l] {
                sup_dist[l] = dd;
            }
        }
        if options.joint_stop && any_out {
            for l in 0..nl {
                flags.stopped[l] |= !flags.frozen[l];
                flags.frozen[l] = true;
            }
        }
    }
}

/// Outcome of the Markov-inequality probe for one `delta`.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub delta: f64,
    pub eta: f64,
    pub lambda: f64,
    /// `P(|Z_{T ^ tau_lambda}| > eta)`.
    pub probability: MeanEstimate,
    /// `E psi_delta(|Z_{T ^ tau_lambda}|^2)`.
    pub psi_mean: MeanEstimate,
    pub psi_eta: f64,
    /// `E psi / psi_delta(eta^2)`.
    pub bound: f64,
    /// Stderr of the per-path difference `P - bound`.
    pub gap_stderr: f64,
    pub holds: bool,
}

/// Which two discretisations of the same pair are coupled.
#[derive(Debug, Clone, Copy)]
pub struct ProbeVariant {
    pub scheme_a: Scheme,
    pub scheme_b: Scheme,
    /// Step ratio of the second flow; `1` means the same grid.
    pub coarse_factor: usize,
}

impl Default for ProbeVariant {
    fn default() -> Self {
        Self { scheme_a: Scheme::EulerMaruyama, scheme_b: Scheme::EulerMaruyama, coarse_factor: 2 }
    }
}

/// `|Z_{T ^ tau_lambda}|` per trajectory for two coupled discretisations.
pub fn probe_gaps(
    pair: &CoefficientPair,
    noise: &BrownianStore,
    starts: &StartPoints,
    lambda: f64,
    variant: ProbeVariant,
) -> Result<CoupledRun> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda must be positive"));
    }
    let lanes = [
        Lane { pair, factor: 1, scheme: variant.scheme_a },
        Lane { pair, factor: variant.coarse_factor, scheme: variant.scheme_b },
    ];
    let opts = CoupledOptions { reference: 0, stopping_radius: Some(lambda), joint_stop: true };
    run_coupled(&lanes, starts, noise, &opts)
}

/// `P(|Z| > eta) <= E psi_delta(|Z|^2) / psi_delta(eta^2)` for each gauge.
pub fn uniqueness_probe(
    pair: &CoefficientPair,
    noise: &BrownianStore,
    starts: &StartPoints,
    gauges: &[AuxiliaryFunction],
    eta: f64,
    lambda: f64,
    variant: ProbeVariant,
) -> Result<Vec<ProbeReport>> {
    if !(eta > 0.0) {
        return Err(Error::param("eta must be positive"));
    }
    let run = probe_gaps(pair, noise, starts, lambda, variant)?;
    let (a, b) = (&run.lanes[0].final_state, &run.lanes[1].final_state);
    let d = starts.dim();
    let z: Vec<f64> = a.chunks(d).zip(b.chunks(d)).map(|(u, v)| dist(u, v)).collect();
    let hit: Vec<f64> = z.iter().map(|&g| if g > eta { 1.0 } else { 0.0 }).collect();
    let probability = path_average(&hit, &run.weights, run.n_paths);
    gauges
        .iter()
        .map(|aux| {
            let sq: Vec<f64> = z.iter().map(|g| g * g).collect();
            let psi = aux.eval_many(&sq)?;
            let psi_eta = aux.eval(eta * eta)?;
            let psi_mean = path_average(&psi, &run.weights, run.n_paths);
            let gap: Vec<f64> = hit.iter().zip(&psi).map(|(h, s)| h - s / psi_eta).collect();
            let g = path_average(&gap, &run.weights, run.n_paths);
            let bound = psi_mean.mean / psi_eta;
            let gap_stderr = if g.stderr.is_finite() { g.stderr } else { 0.0 };
            Ok(ProbeReport {
                delta: aux.delta(),
                eta,
                lambda,
                probability,
                psi_mean,
                psi_eta,
                bound,
                gap_stderr,
                holds: probability.mean <= bound + 3.0 * gap_stderr,
            })
        })
        .collect()
}
