//! Pair-sampling certificates of the Osgood-Sobolev hypotheses.
//!
//! A certificate samples point pairs `|x - y| <= R` in a box and compares
//! the two sides of the inequality. Measure-zero exceptional sets are
//! invisible to sampling, so a configured violation rate is tolerated.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::maximal::local_maximal_function;
use super::CoefficientPair;
use crate::grid::ScalarGrid;
use crate::moduli::OsgoodModulus;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `|<x-y, b(x)-b(y)>| <= (g(x)+g(y)) rho(|x-y|^2)`.
    Drift,
    /// `||sigma(x)-sigma(y)||_F^2 <= (g(x)+g(y)) rho(|x-y|^2)`.
    Sigma,
    /// `|b(x)-b(y)| <= (g(x)+g(y)) |x-y|`, the pointwise Sobolev estimate
    /// with `g = C_d M_R |grad b|`.
    MaximalLipschitz,
}

/// The weight `g_R`.
#[derive(Debug, Clone)]
pub enum Weight {
    Constant(f64),
    Grid(ScalarGrid),
}

impl Weight {
    fn validate(&self) -> Result<()> {
        match self {
            Weight::Constant(c) if !(*c >= 0.0) => Err(Error::domain(format!("g_R = {c} is negative"))),
            Weight::Grid(g) => match g.values.iter().find(|v| !(**v >= 0.0)) {
                Some(v) => Err(Error::domain(format!("g_R takes the negative value {v}"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Constant(c) => *c,
            Weight::Grid(g) => g.interpolate(x),
        }
    }

    pub fn scaled(&self, s: f64) -> Weight {
        match self {
            Weight::Constant(c) => Weight::Constant(c * s),
            Weight::Grid(g) => Weight::Grid(ScalarGrid {
                spec: g.spec.clone(),
                values: g.values.iter().map(|v| v * s).collect(),
            }),
        }
    }

    /// Empirical `L^q` norm over the tabulation box (`None` for constants).
    pub fn lq_norm(&self, q: f64) -> Option<f64> {
        match self {
            Weight::Constant(_) => None,
            Weight::Grid(g) => {
                let p: Vec<f64> = g.values.iter().map(|v| v.abs().powf(q)).collect();
                Some((crate::stats::pairwise_sum(&p) * g.spec.cell_volume()).powf(1.0 / q))
            }
        }
    }
}

/// Sampling box, pair radius and sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifySettings {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub radius: f64,
    pub n_pairs: usize,
    pub seed: u64,
    /// Accepted violation rate.
    pub tolerance: f64,
}

impl CertifySettings {
    pub fn cube(dim: usize, half: f64, radius: f64, n_pairs: usize, seed: u64) -> Self {
        Self { lower: vec![-half; dim], upper: vec![half; dim], radius, n_pairs, seed, tolerance: 0.0 }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::param("n_pairs must be at least 1"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::param("pair radius must be positive"));
        }
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(Error::param(format!("sampling box must be {dim}-dimensional")));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(u > l)) {
            return Err(Error::param("sampling box is degenerate"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OsgoodCertificate {
    pub condition: Condition,
    pub modulus: String,
    pub radius: f64,
    pub n_pairs: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// `max LHS / RHS` over the sampled pairs.
    pub worst_ratio: f64,
    pub tolerance: f64,
}

impl OsgoodCertificate {
    pub fn passes(&self) -> bool {
        self.violation_rate <= self.tolerance
    }
}

fn sample_pair<R: Rng>(rng: &mut R, s: &CertifySettings) -> (Vec<f64>, Vec<f64>) {
    let d = s.lower.len();
    let uniform = |rng: &mut R| -> Vec<f64> { (0..d).map(|a| rng.gen_range(s.lower[a]..s.upper[a])).collect() };
    let x = uniform(rng);
    for _ in 0..256 {
        let y = uniform(rng);
        if dist(&x, &y) <= s.radius {
            return (x, y);
        }
    }
    // the box dwarfs the ball: draw y from the ball around x instead
    loop {
        let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-s.radius..s.radius)).collect();
        let inside = y.iter().zip(s.lower.iter().zip(&s.upper)).all(|(v, (l, u))| v >= l && v < u);
        if inside && dist(&x, &y) <= s.radius {
            return (x, y);
        }
    }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Left side and the modulus factor of the right side (everything but the
/// weights).
fn sides(pair: &CoefficientPair, cond: Condition, modulus: &OsgoodModulus, x: &[f64], y: &[f64]) -> (f64, f64) {
    let r = dist(x, y);
    match cond {
        Condition::Drift => {
            let (bx, by) = (pair.drift_at(x), pair.drift_at(y));
            let inner: f64 = (0..x.len()).map(|i| (x[i] - y[i]) * (bx[i] - by[i])).sum();
            (inner.abs(), modulus.eval_unchecked(r * r))
        }
        Condition::Sigma => {
            let (sx, sy) = (pair.sigma_at(x), pair.sigma_at(y));
            let fro: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b) * (a - b)).sum();
            (fro, modulus.eval_unchecked(r * r))
        }
        Condition::MaximalLipschitz => {
            let (bx, by) = (pair.drift_at(x), pair.drift_at(y));
            (dist(&bx, &by), r)
        }
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

fn certify(
    pair: &CoefficientPair,
    cond: Condition,
    modulus: &OsgoodModulus,
    weight: &Weight,
    settings: &CertifySettings,
) -> Result<OsgoodCertificate> {
    settings.validate(pair.dim())?;
    weight.validate()?;
    let ratios: Vec<f64> = (0..settings.n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(settings.seed, Purpose::Pairs, i);
            let (x, y) = sample_pair(&mut rng, settings);
            let (lhs, factor) = sides(pair, cond, modulus, &x, &y);
            ratio(lhs, (weight.eval(&x) + weight.eval(&y)) * factor)
        })
        .collect();
    let violations = ratios.iter().filter(|r| **r > 1.0).count();
    Ok(OsgoodCertificate {
        condition: cond,
        modulus: modulus.name().to_string(),
        radius: settings.radius,
        n_pairs: settings.n_pairs,
        violations,
        violation_rate: violations as f64 / settings.n_pairs as f64,
        worst_ratio: ratios.iter().cloned().fold(0.0, f64::max),
        tolerance: settings.tolerance,
    })
}

/// Certifies the drift hypothesis for `g_R = weight`.
pub fn certify_hq(
    pair: &CoefficientPair,
    modulus: &OsgoodModulus,
    weight: &Weight,
    settings: &CertifySettings,
) -> Result<OsgoodCertificate> {
    certify(pair, Condition::Drift, modulus, weight, settings)
}

/// Certifies the diffusion hypothesis (squared Frobenius norm on the left).
pub fn certify_hsigma(
    pair: &CoefficientPair,
    modulus: &OsgoodModulus,
    weight: &Weight,
    settings: &CertifySettings,
) -> Result<OsgoodCertificate> {
    certify(pair, Condition::Sigma, modulus, weight, settings)
}

/// Generic entry point, used for the pointwise Sobolev estimate.
pub fn certify_condition(
    pair: &CoefficientPair,
    cond: Condition,
    modulus: &OsgoodModulus,
    weight: &Weight,
    settings: &CertifySettings,
) -> Result<OsgoodCertificate> {
    certify(pair, cond, modulus, weight, settings)
}

/// Smallest `c` with `LHS <= c (w(x)+w(y)) * factor` on a sweep sample,
/// sharpened by a pattern search around the worst pairs and inflated by
/// `1 + headroom`. Uses a stream disjoint from the certification pairs.
pub fn sweep_weight_scale(
    pair: &CoefficientPair,
    cond: Condition,
    modulus: &OsgoodModulus,
    base: &Weight,
    settings: &CertifySettings,
    headroom: f64,
) -> Result<f64> {
    settings.validate(pair.dim())?;
    base.validate()?;
    let eval = |x: &[f64], y: &[f64]| {
        let (lhs, factor) = sides(pair, cond, modulus, x, y);
        ratio(lhs, (base.eval(x) + base.eval(y)) * factor)
    };
    let mut samples: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..settings.n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(settings.seed, Purpose::Sweep, i);
            let (x, y) = sample_pair(&mut rng, settings);
            (eval(&x, &y), x, y)
        })
        .collect();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    samples.truncate(16);
    let d = pair.dim();
    let inside = |p: &[f64]| p.iter().zip(settings.lower.iter().zip(&settings.upper)).all(|(v, (l, u))| v >= l && v <= u);
    let refined: Vec<f64> = samples
        .into_par_iter()
        .map(|(mut best, mut x, mut y)| {
            let mut step = 0.05 * settings.radius;
            while step > 1e-10 * settings.radius {
                let mut improved = false;
                for c in 0..2 * d {
                    for sign in [-1.0, 1.0] {
                        let (mut xt, mut yt) = (x.clone(), y.clone());
                        if c < d { xt[c] += sign * step } else { yt[c - d] += sign * step }
                        if !inside(&xt) || !inside(&yt) || dist(&xt, &yt) > settings.radius || xt == yt {
                            continue;
                        }
                        let r = eval(&xt, &yt);
                        if r > best {
                            best = r;
                            x = xt;
                            y = yt;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best
        })
        .collect();
    let worst = refined.into_iter().fold(0.0, f64::max);
    if !worst.is_finite() {
        return Err(Error::Numeric("weight sweep found an unbounded ratio".into()));
    }
    Ok(worst * (1.0 + headroom))
}

/// Base weight `(M_R g)^2` of the Sobolev recipe for the diffusion
/// hypothesis; the swept scale plays the role of `2 C_d^2`.
pub fn sobolev_weight(grad_norm: &ScalarGrid, radius: f64, radii_count: usize) -> Result<Weight> {
    let m = local_maximal_function(grad_norm, radius, radii_count)?;
    Ok(Weight::Grid(ScalarGrid { spec: m.spec, values: m.values.iter().map(|v| v * v).collect() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{DiffusionSpec, DriftSpec};

    fn pair(drift: DriftSpec, sigma: DiffusionSpec, d: usize) -> CoefficientPair {
        CoefficientPair::from_specs(&drift, &sigma, d, d).unwrap()
    }

    #[test]
    fn constant_drift_never_violates() {
        let p = pair(DriftSpec::Constant { value: vec![1.0, 2.0] }, DiffusionSpec::Zero, 2);
        let s = CertifySettings::cube(2, 2.0, 1.0, 2000, 1);
        let c = certify_hq(&p, &OsgoodModulus::log_linear(), &Weight::Constant(0.0), &s).unwrap();
        assert_eq!(c.violation_rate, 0.0);
        assert_eq!(c.worst_ratio, 0.0);
    }

    #[test]
    fn identity_drift_with_linear_modulus() {
        let p = pair(DriftSpec::Linear { scale: 1.0 }, DiffusionSpec::Zero, 3);
        let s = CertifySettings::cube(3, 2.0, 1.0, 5000, 2);
        let c = certify_hq(&p, &OsgoodModulus::linear(), &Weight::Constant(1.0), &s).unwrap();
        assert_eq!(c.violations, 0);
        assert!((c.worst_ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        let s = CertifySettings::cube(1, 3.0, 1.0, 5000, 3);
        let p = pair(DriftSpec::Zero, DiffusionSpec::Constant { scale: 0.7 }, 1);
        let c = certify_hsigma(&p, &OsgoodModulus::linear(), &Weight::Constant(0.0), &s).unwrap();
        assert_eq!(c.violations, 0);
        let p = pair(DriftSpec::Zero, DiffusionSpec::Tanh { scale: 1.0 }, 1);
        let c = certify_hsigma(&p, &OsgoodModulus::linear(), &Weight::Constant(1.0), &s).unwrap();
        assert_eq!(c.violations, 0);
        assert!(c.worst_ratio <= 0.5 + 1e-12);
    }

    #[test]
    fn negative_weight_rejected() {
        let p = pair(DriftSpec::Zero, DiffusionSpec::Zero, 1);
        let s = CertifySettings::cube(1, 1.0, 0.5, 10, 0);
        let w = Weight::Constant(-1.0);
        assert!(matches!(certify_hq(&p, &OsgoodModulus::linear(), &w, &s), Err(Error::Domain(_))));
    }

    #[test]
    fn certification_is_independent_of_worker_count() {
        let p = pair(DriftSpec::Vseries { terms: 200, table_points: None }, DiffusionSpec::Zero, 1);
        let s = CertifySettings::cube(1, 3.0, 1.0, 3000, 4);
        let run = |n| {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| {
                certify_hq(&p, &OsgoodModulus::log_linear(), &Weight::Constant(0.3), &s).unwrap()
            })
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.violations, b.violations);
        assert_eq!(a.worst_ratio.to_bits(), b.worst_ratio.to_bits());
    }
}
