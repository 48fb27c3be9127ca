//! Osgood moduli and the auxiliary gauge
//! `psi_delta(xi) = int_0^xi ds / (rho(s) + delta)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::quadrature::integrate_adaptive;
use crate::{Error, Result};

/// `e^{-2}`, the splice point of the log-linear modulus.
pub const LOG_LINEAR_BREAKPOINT: f64 = 0.135_335_283_236_612_7;

/// Relative tolerance of the adaptive quadrature behind [`AuxiliaryFunction::eval`].
pub const PSI_REL_TOL: f64 = 1e-10;

/// Default `I(eps_min) / I(eps_max)` ratio above which a divergence
/// certificate calls the integral unbounded-looking.
pub const DEFAULT_DIVERGENCE_RATIO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModulusKind {
    Linear,
    /// `s log(1/s)` on `[0, e^-2]`, `s + e^-2` beyond.
    LogLinear,
    /// `s log(1/s + e)`.
    LogLinearSmooth,
    Custom,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Custom {
    /// `(ln s, ln rho)` knots, linearly interpolated.
    Table { log_s: Vec<f64>, log_rho: Vec<f64> },
    Function { value: ScalarFn, derivative: ScalarFn },
}

#[derive(Clone)]
pub struct OsgoodModulus {
    kind: ModulusKind,
    name: String,
    breakpoint: f64,
    custom: Option<Custom>,
}

impl fmt::Debug for OsgoodModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OsgoodModulus")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .field("breakpoint", &self.breakpoint)
            .finish()
    }
}

impl OsgoodModulus {
    pub fn linear() -> Self {
        Self { kind: ModulusKind::Linear, name: "linear".into(), breakpoint: 0.0, custom: None }
    }

    pub fn log_linear() -> Self {
        Self {
            kind: ModulusKind::LogLinear,
            name: "loglinear".into(),
            breakpoint: LOG_LINEAR_BREAKPOINT,
            custom: None,
        }
    }

    pub fn log_linear_smooth() -> Self {
        Self {
            kind: ModulusKind::LogLinearSmooth,
            name: "loglinear-smooth".into(),
            breakpoint: 0.0,
            custom: None,
        }
    }

    /// Built-in modulus by config key.
    pub fn from_key(key: &str) -> Result<Self> {
        match key {
            "linear" => Ok(Self::linear()),
            "loglinear" => Ok(Self::log_linear()),
            "loglinear-smooth" => Ok(Self::log_linear_smooth()),
            other => Err(Error::param(format!(
                "unknown modulus '{other}' (expected linear, loglinear, loglinear-smooth)"
            ))),
        }
    }

    /// Modulus given by closures. Nothing is checked here; run
    /// [`OsgoodModulus::check`] to validate.
    pub fn custom_fn(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: ModulusKind::Custom,
            name: name.into(),
            breakpoint: 0.0,
            custom: Some(Custom::Function { value: Arc::new(value), derivative: Arc::new(derivative) }),
        }
    }

    /// Tabulated `(s, rho(s))` pairs, interpolated linearly in log-log
    /// space and extended by the end slopes. Requires at least two pairs
    /// with strictly increasing positive `s` and positive `rho`.
    pub fn from_table(name: impl Into<String>, pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::param("tabulated modulus needs at least two (s, rho) pairs"));
        }
        let mut log_s = Vec::with_capacity(pairs.len());
        let mut log_rho = Vec::with_capacity(pairs.len());
        for (i, &(s, r)) in pairs.iter().enumerate() {
            if !(s > 0.0) || !(r > 0.0) {
                return Err(Error::domain(format!("row {i}: s and rho must be positive")));
            }
            if i > 0 && s <= pairs[i - 1].0 {
                return Err(Error::param(format!("row {i}: s must be strictly increasing")));
            }
            log_s.push(s.ln());
            log_rho.push(r.ln());
        }
        Ok(Self {
            kind: ModulusKind::Custom,
            name: name.into(),
            breakpoint: 0.0,
            custom: Some(Custom::Table { log_s, log_rho }),
        })
    }

    /// Reads a two-column CSV (`s,rho` header) into a tabulated modulus.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut pairs = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::param(format!("bad modulus row {record:?}")))
            };
            pairs.push((parse(0)?, parse(1)?));
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_table(name, &pairs)
    }

    pub fn kind(&self) -> ModulusKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Splice point of a piecewise modulus, `0` when there is none.
    pub fn breakpoint(&self) -> f64 {
        self.breakpoint
    }

    /// `rho(s)`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::domain(format!("modulus argument must be >= 0, got {s}")));
        }
        Ok(self.eval_unchecked(s))
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        match self.kind {
            ModulusKind::Linear => s,
            ModulusKind::LogLinear => {
                if s <= LOG_LINEAR_BREAKPOINT {
                    -s * s.ln()
                } else {
                    s + LOG_LINEAR_BREAKPOINT
                }
            }
            ModulusKind::LogLinearSmooth => s * (1.0 / s + std::f64::consts::E).ln(),
            ModulusKind::Custom => match self.custom.as_ref().expect("custom data") {
                Custom::Function { value, .. } => value(s),
                Custom::Table { log_s, log_rho } => {
                    let (i, slope) = table_segment(log_s, log_rho, s.ln());
                    (log_rho[i] + slope * (s.ln() - log_s[i])).exp()
                }
            },
        }
    }

    /// `rho'(s)`. At the splice of the log-linear modulus the left-hand
    /// derivative is returned; at `s = 0` it may be `+inf`.
    pub fn derivative(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::domain(format!("modulus argument must be >= 0, got {s}")));
        }
        Ok(match self.kind {
            ModulusKind::Linear => 1.0,
            ModulusKind::LogLinear => {
                if s == 0.0 {
                    f64::INFINITY
                } else if s <= LOG_LINEAR_BREAKPOINT {
                    -s.ln() - 1.0
                } else {
                    1.0
                }
            }
            ModulusKind::LogLinearSmooth => {
                if s == 0.0 {
                    f64::INFINITY
                } else {
                    let e = std::f64::consts::E;
                    (1.0 / s + e).ln() - 1.0 / (1.0 + e * s)
                }
            }
            ModulusKind::Custom => match self.custom.as_ref().expect("custom data") {
                Custom::Function { derivative, .. } => derivative(s),
                Custom::Table { log_s, log_rho } => {
                    if s == 0.0 {
                        let (_, slope) = table_segment(log_s, log_rho, f64::NEG_INFINITY);
                        return Ok(if slope < 1.0 {
                            f64::INFINITY
                        } else if slope == 1.0 {
                            (log_rho[0] - log_s[0]).exp()
                        } else {
                            0.0
                        });
                    }
                    let (i, slope) = table_segment(log_s, log_rho, s.ln());
                    let rho = (log_rho[i] + slope * (s.ln() - log_s[i])).exp();
                    slope * rho / s
                }
            },
        })
    }

    /// Samples the structural invariants on a log-spaced grid of `s`.
    pub fn check(&self) -> ModulusCheck {
        let samples: Vec<f64> = std::iter::once(0.0)
            .chain((0..=600).map(|i| 10f64.powf(-14.0 + 17.0 * i as f64 / 600.0)))
            .collect();
        let values: Vec<f64> = samples.iter().map(|&s| self.eval_unchecked(s)).collect();
        let zero_at_origin = values[0] == 0.0;
        let finite = values.iter().all(|v| v.is_finite());
        let monotone = values.windows(2).all(|w| w[1] >= w[0]);
        let mut first_below_identity = None;
        for (&s, &v) in samples.iter().zip(&values) {
            if v < s * (1.0 - 1e-12) {
                first_below_identity = Some(s);
                break;
            }
        }
        let splice_gap = if self.breakpoint > 0.0 {
            let b = self.breakpoint;
            match self.kind {
                ModulusKind::LogLinear => (-b * b.ln() - (b + LOG_LINEAR_BREAKPOINT)).abs(),
                _ => (self.eval_unchecked(b * (1.0 + 1e-15)) - self.eval_unchecked(b)).abs(),
            }
        } else {
            0.0
        };
        ModulusCheck { zero_at_origin, finite, monotone, first_below_identity, splice_gap }
    }
}

fn table_segment(log_s: &[f64], log_rho: &[f64], ls: f64) -> (usize, f64) {
    let n = log_s.len();
    let i = match log_s.partition_point(|&k| k <= ls) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let slope = (log_rho[i + 1] - log_rho[i]) / (log_s[i + 1] - log_s[i]);
    (i, slope)
}

/// Outcome of [`OsgoodModulus::check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusCheck {
    pub zero_at_origin: bool,
    pub finite: bool,
    pub monotone: bool,
    /// Smallest sampled `s` with `rho(s) < s`, if any.
    pub first_below_identity: Option<f64>,
    /// `|left - right|` at the splice point.
    pub splice_gap: f64,
}

impl ModulusCheck {
    pub fn valid(&self) -> bool {
        self.zero_at_origin && self.finite && self.monotone && self.first_below_identity.is_none()
    }
}

/// `psi_delta` for a fixed modulus.
#[derive(Debug, Clone)]
pub struct AuxiliaryFunction {
    modulus: OsgoodModulus,
    delta: f64,
}

impl AuxiliaryFunction {
    pub fn new(modulus: OsgoodModulus, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::param(format!("delta must be positive and finite, got {delta}")));
        }
        Ok(Self { modulus, delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn modulus(&self) -> &OsgoodModulus {
        &self.modulus
    }

    /// `psi_delta(xi)`; closed form for the linear modulus, adaptive
    /// Gauss-Kronrod (split at the splice) otherwise.
    pub fn eval(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) {
            return Err(Error::domain(format!("psi argument must be >= 0, got {xi}")));
        }
        if xi == 0.0 {
            return Ok(0.0);
        }
        if self.modulus.kind == ModulusKind::Linear {
            return Ok((xi / self.delta).ln_1p());
        }
        let delta = self.delta;
        let m = &self.modulus;
        let integrand = |s: f64| 1.0 / (m.eval_unchecked(s) + delta);
        // tighter than the advertised tolerance: the GK error estimate is
        // pessimistic but not guaranteed
        let tol = PSI_REL_TOL * 1e-2;
        let b = m.breakpoint;
        if b > 0.0 && b < xi {
            Ok(integrate_adaptive(integrand, 0.0, b, tol, 0.0)?
                + integrate_adaptive(integrand, b, xi, tol, 0.0)?)
        } else {
            integrate_adaptive(integrand, 0.0, xi, tol, 0.0)
        }
    }

    /// `psi_delta` at many points: sorts them and integrates between
    /// consecutive values, so large samples cost one short quadrature each.
    pub fn eval_many(&self, xis: &[f64]) -> Result<Vec<f64>> {
        if let Some(bad) = xis.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::domain(format!("psi argument must be >= 0, got {bad}")));
        }
        if self.modulus.kind == ModulusKind::Linear {
            return Ok(xis.iter().map(|x| (x / self.delta).ln_1p()).collect());
        }
        let mut order: Vec<usize> = (0..xis.len()).collect();
        order.sort_by(|&a, &b| xis[a].total_cmp(&xis[b]));
        let m = &self.modulus;
        let delta = self.delta;
        let integrand = |s: f64| 1.0 / (m.eval_unchecked(s) + delta);
        let tol = PSI_REL_TOL * 1e-2;
        let b = m.breakpoint;
        let mut out = vec![0.0; xis.len()];
        let (mut at, mut acc) = (0.0, 0.0);
        for i in order {
            let x = xis[i];
            if x > at {
                acc += if b > at && b < x {
                    integrate_adaptive(integrand, at, b, tol, 0.0)? + integrate_adaptive(integrand, b, x, tol, 0.0)?
                } else {
                    integrate_adaptive(integrand, at, x, tol, 0.0)?
                };
                at = x;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn derivative(&self, xi: f64) -> Result<f64> {
        Ok(1.0 / (self.modulus.eval(xi)? + self.delta))
    }
}

/// `I(eps) = int_eps^1 ds / rho(s)` for each `eps`, plus the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub modulus: String,
    pub epsilons: Vec<f64>,
    pub integrals: Vec<f64>,
    pub strictly_increasing: bool,
    /// `I(eps_min) / I(eps_max)`.
    pub growth_ratio: f64,
    pub threshold: f64,
    pub unbounded_looking: bool,
    pub modulus_check: ModulusCheck,
}

impl DivergenceReport {
    /// Advisory certificate: valid modulus, monotone growth and growth
    /// ratio above the threshold.
    pub fn passes(&self) -> bool {
        self.modulus_check.valid() && self.strictly_increasing && self.unbounded_looking
    }
}

/// `int_eps^1 ds / rho(s)` via the substitution `s = e^u`, which turns the
/// `1/(s log(1/s))` type singularity into a smooth integrand.
pub fn osgood_integral(modulus: &OsgoodModulus, eps: f64) -> Result<f64> {
    if !(eps > 0.0) || eps > 1.0 {
        return Err(Error::param(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    if modulus.kind == ModulusKind::Linear {
        return Ok(-eps.ln());
    }
    let f = |u: f64| {
        let s = u.exp();
        s / modulus.eval_unchecked(s)
    };
    let lo = eps.ln();
    let b = modulus.breakpoint;
    if b > eps && b < 1.0 {
        let lb = b.ln();
        Ok(integrate_adaptive(f, lo, lb, 1e-12, 0.0)? + integrate_adaptive(f, lb, 0.0, 1e-12, 0.0)?)
    } else {
        integrate_adaptive(f, lo, 0.0, 1e-12, 0.0)
    }
}

/// Numerical certificate of `int_{0+} ds / rho(s) = inf`. Not a proof.
pub fn certify_osgood_divergence(
    modulus: &OsgoodModulus,
    epsilons: &[f64],
    threshold: f64,
) -> Result<DivergenceReport> {
    if epsilons.is_empty() {
        return Err(Error::param("epsilon list is empty"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("epsilons must be strictly decreasing"));
    }
    let integrals = epsilons
        .iter()
        .map(|&e| osgood_integral(modulus, e))
        .collect::<Result<Vec<_>>>()?;
    let strictly_increasing = integrals.windows(2).all(|w| w[1] > w[0]);
    let first = integrals[0];
    let last = *integrals.last().expect("non-empty");
    let growth_ratio = if first > 0.0 { last / first } else { f64::INFINITY };
    Ok(DivergenceReport {
        modulus: modulus.name.clone(),
        epsilons: epsilons.to_vec(),
        integrals,
        strictly_increasing,
        growth_ratio,
        threshold,
        unbounded_looking: growth_ratio > threshold,
        modulus_check: modulus.check(),
    })
}
