//! Static configuration checks. Nothing here integrates anything.

use crate::density::MeasureKind;
use crate::fields::{DiffusionSpec, DriftSpec};
use crate::fokker_planck::{Boundary, FpeScheme, GeneratorGrid};

use super::config::{CauchyMode, Experiment, ExperimentConfig, GridConfig, StartMode, SCHEMA_VERSION};

/// One offending key and what is wrong with it.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Finding {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

struct Findings(Vec<Finding>);

impl Findings {
    fn push(&mut self, key: &str, message: impl Into<String>) {
        self.0.push(Finding { key: key.into(), message: message.into() });
    }

    fn require(&mut self, ok: bool, key: &str, message: &str) {
        if !ok {
            self.push(key, message);
        }
    }
}

fn check_grid(f: &mut Findings, key: &str, g: &GridConfig, d: usize) {
    if g.lower.len() != d || g.upper.len() != d || g.resolution.len() != d {
        f.push(key, format!("lower, upper and resolution must have {d} entries"));
        return;
    }
    if g.lower.iter().zip(&g.upper).any(|(l, u)| !(u > l)) {
        f.push(key, "every upper bound must exceed its lower bound");
    }
    if g.resolution.contains(&0) {
        f.push(key, "resolution entries must be positive");
    }
}

fn check_ladder(f: &mut Findings, levels: &[usize]) {
    if levels.len() < 2 {
        f.push("mollify.levels", "ladder requires ≥ 2 levels");
    }
    if levels.contains(&0) {
        f.push("mollify.levels", "levels must be positive");
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        f.push("mollify.levels", "levels must be strictly increasing");
    }
}

/// Every problem found in `c`; empty when the config can run.
pub fn validate(c: &ExperimentConfig) -> Vec<Finding> {
    let mut f = Findings(Vec::new());
    f.require(c.schema_version == SCHEMA_VERSION, "schema_version", &format!("expected {SCHEMA_VERSION}"));

    let d = c.coefficients.d;
    let m = c.coefficients.noise_dim();
    f.require((1..=3).contains(&d), "coefficients.d", "must be 1, 2 or 3");
    f.require(m >= 1, "coefficients.m", "must be positive");
    match &c.coefficients.drift {
        DriftSpec::Rotation { .. } | DriftSpec::Shear if d != 2 => {
            f.push("coefficients.drift", format!("{} drift needs d = 2", c.coefficients.drift.key()))
        }
        DriftSpec::Constant { value } if value.len() != d => {
            f.push("coefficients.drift.value", format!("needs {d} entries"))
        }
        DriftSpec::Vseries { terms: 0, .. } => f.push("coefficients.drift.terms", "must be positive"),
        DriftSpec::Vseries { table_points: Some(n), .. } if *n < 2 => {
            f.push("coefficients.drift.table_points", "needs at least 2 points")
        }
        DriftSpec::Tabulated { path } if !path.exists() => {
            f.push("coefficients.drift.path", format!("{} does not exist", path.display()))
        }
        _ => {}
    }
    if let DiffusionSpec::Tabulated { path } = &c.coefficients.diffusion {
        if !path.exists() {
            f.push("coefficients.diffusion.path", format!("{} does not exist", path.display()));
        }
    }
    if let Err(e) = c.modulus.build() {
        f.push("modulus.key", e.to_string());
    }
    if let Some(g) = &c.grid {
        check_grid(&mut f, "grid", g, d);
    }
    match &c.measure.reference {
        MeasureKind::Weighted { q } => f.require(*q > 1.0, "measure.reference.q", "must exceed 1"),
        MeasureKind::Lebesgue { lower, upper } => {
            if lower.len() != d || upper.len() != d || lower.iter().zip(upper).any(|(l, u)| !(u > l)) {
                f.push("measure.reference", format!("Lebesgue box must be a non-degenerate {d}-d box"));
            }
        }
    }
    if c.measure.starts == StartMode::Quadrature {
        match &c.measure.quadrature {
            Some(g) => check_grid(&mut f, "measure.quadrature", g, d),
            None => f.push("measure.quadrature", "required when measure.starts = \"quadrature\""),
        }
    }

    let fl = &c.flow;
    let needs_flow = matches!(c.experiment, Experiment::FlowCauchy | Experiment::DensityBound | Experiment::FpeDuality);
    if needs_flow {
        f.require(fl.t_end > 0.0 && fl.t_end.is_finite(), "flow.t_end", "must be positive");
        f.require(fl.steps >= 1, "flow.steps", "must be positive");
        f.require(fl.paths >= 2, "flow.paths", "need at least 2 paths for a standard error");
        f.require(fl.particles >= 1 || c.measure.starts == StartMode::Quadrature, "flow.particles", "must be positive");
        if let Some(r) = fl.stopping_radius {
            f.require(r > 0.0, "flow.stopping_radius", "must be positive");
        }
        if fl.scheme == crate::flow::Scheme::Milstein1d && (d != 1 || m != 1) {
            f.push("flow.scheme", "milstein1d needs d = m = 1");
        }
    }

    let mo = &c.mollify;
    if !mo.levels.is_empty() || c.experiment == Experiment::MollifyLadder {
        f.require(mo.quadrature_points >= 4, "mollify.quadrature_points", "need at least 4 per axis");
        f.require(mo.cells_per_unit >= 0.0, "mollify.cells_per_unit", "must be nonnegative");
        f.require(mo.radius > 0.0, "mollify.radius", "must be positive");
        f.require(mo.distance_cells >= 1, "mollify.distance_cells", "must be positive");
        f.require(mo.q >= 1.0, "mollify.q", "must be at least 1");
    }

    match c.experiment {
        Experiment::OsgoodCertify => {
            let ce = &c.certify;
            f.require(ce.half > 0.0, "certify.half", "must be positive");
            f.require(ce.radius > 0.0, "certify.radius", "must be positive");
            f.require(ce.n_pairs >= 1, "certify.n_pairs", "must be positive");
            f.require(ce.sweep_pairs >= 1, "certify.sweep_pairs", "must be positive");
            f.require(ce.headroom >= 0.0, "certify.headroom", "must be nonnegative");
            f.require(!ce.epsilons.is_empty(), "certify.epsilons", "must not be empty");
            f.require(
                ce.epsilons.iter().all(|e| *e > 0.0 && *e <= 1.0) && ce.epsilons.windows(2).all(|w| w[1] < w[0]),
                "certify.epsilons",
                "must be strictly decreasing in (0, 1]",
            );
        }
        Experiment::MollifyLadder => check_ladder(&mut f, &mo.levels),
        Experiment::FlowCauchy => match fl.cauchy {
            CauchyMode::Mollify => check_ladder(&mut f, &mo.levels),
            CauchyMode::Steps => {
                if fl.step_ladder.len() < 2 {
                    f.push("flow.step_ladder", "ladder requires ≥ 2 levels");
                }
                if fl.step_ladder.contains(&0) || fl.step_ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
                    f.push("flow.step_ladder", "step counts must double from one entry to the next");
                }
                if !(fl.ratio_band[0] < fl.ratio_band[1]) {
                    f.push("flow.ratio_band", "lower end must be below the upper end");
                }
            }
        },
        Experiment::DensityBound => {
            if c.grid.is_none() {
                f.push("grid", "required by density-bound");
            }
            let de = &c.density;
            f.require(!de.p.is_empty() && de.p.iter().all(|p| *p >= 1.0), "density.p", "need exponents >= 1");
            f.require(de.slack >= 0.0, "density.slack", "must be nonnegative");
            if let Some(b) = &de.bandwidth {
                f.require(b.len() == d && b.iter().all(|h| *h > 0.0), "density.bandwidth", "need d positive entries");
            }
            check_times(&mut f, c);
        }
        Experiment::FpeDuality => check_fpe(&mut f, c),
    }
    if let Some(p) = &fl.probe {
        f.require(p.eta > 0.0, "flow.probe.eta", "must be positive");
        f.require(p.lambda > 0.0, "flow.probe.lambda", "must be positive");
        f.require(!p.deltas.is_empty() && p.deltas.iter().all(|v| *v > 0.0), "flow.probe.deltas", "need positive deltas");
        f.require(p.coarse_factor >= 1 && fl.steps.is_multiple_of(p.coarse_factor), "flow.probe.coarse_factor", "must divide flow.steps");
    }
    f.0
}

fn check_times(f: &mut Findings, c: &ExperimentConfig) {
    let dt = c.flow.t_end / c.flow.steps.max(1) as f64;
    for t in c.density_times() {
        let k = (t / dt).round();
        if !(t > 0.0 && t <= c.flow.t_end) || (k * dt - t).abs() > 1e-9 * c.flow.t_end.max(1.0) {
            f.push("density.times", format!("t = {t} is not a step of the time grid in (0, T]"));
        }
    }
}

fn check_fpe(f: &mut Findings, c: &ExperimentConfig) {
    let d = c.coefficients.d;
    if c.grid.is_none() {
        f.push("grid", "required by fpe-duality");
        return;
    }
    if let Some(r) = &c.fpe.resolution {
        f.require(r.len() == d && !r.contains(&0), "fpe.resolution", "need d positive entries");
    }
    if let Some(dt) = c.fpe.dt {
        f.require(dt > 0.0, "fpe.dt", "must be positive");
    }
    if let Some(g) = &c.fpe.start_grid {
        check_grid(f, "fpe.start_grid", g, d);
    }
    f.require(c.fpe.grid_budget >= 0.0, "fpe.grid_budget", "must be nonnegative");
    f.require(!c.fpe.test_functions.is_empty(), "fpe.test_functions", "need at least one");
    let super::config::InitialDensity::Gaussian { mean, variance } = &c.fpe.initial;
    f.require(*variance > 0.0, "fpe.initial.variance", "must be positive");
    f.require(mean.is_empty() || mean.len() == d, "fpe.initial.mean", "needs d entries");
    if let Some(u) = &c.fpe.uniqueness {
        for (i, s) in u.iter().enumerate() {
            f.require(s.refine >= 1, &format!("fpe.uniqueness[{i}].refine"), "must be positive");
            f.require(s.dt > 0.0, &format!("fpe.uniqueness[{i}].dt"), "must be positive");
            f.require(s.scheme != FpeScheme::ExplicitEuler, &format!("fpe.uniqueness[{i}].scheme"), "use an implicit scheme");
        }
    }
    check_times(f, c);
    if c.fpe.scheme == FpeScheme::ExplicitEuler && f.0.is_empty() {
        let spec = match c.fpe_grid() {
            Ok(s) => s,
            Err(_) => return,
        };
        let limit = match c.coefficients.build().and_then(|p| GeneratorGrid::new(&p, spec.clone(), Boundary::ZeroFlux)) {
            Ok(g) => g.explicit_dt_limit(),
            Err(e) => {
                f.push("coefficients", e.to_string());
                return;
            }
        };
        let dt = c.fpe.dt.unwrap_or_else(|| spec.steps().into_iter().fold(f64::INFINITY, f64::min));
        if dt > limit * (1.0 + 1e-12) {
            f.push("fpe.dt", format!("explicit scheme needs dt <= {limit:e} (CFL), got {dt:e}"));
        }
    }
}
