use std::f64::consts::{FRAC_PI_2, PI};

use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::StartPoints;
use crate::grid::GridSpec;
use crate::quadrature::integrate_adaptive;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Samples drawn per random stream; fixes the work split for determinism.
const SAMPLE_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureKind {
    /// `(1 + |x|^2)^(-q - (d+1)/2) dx`, normalised.
    Weighted { q: f64 },
    /// Uniform probability on a box.
    Lebesgue { lower: Vec<f64>, upper: Vec<f64> },
}

/// Reference measure `mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedMeasure {
    pub kind: MeasureKind,
    pub dim: usize,
    /// Integral of the unnormalised density.
    pub normalization: f64,
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unreachable!("d <= 3 checked on construction"),
    }
}

impl WeightedMeasure {
    pub fn weighted(q: f64, dim: usize) -> Result<Self> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::param(format!("weighted measure needs q > 1, got {q}")));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::param("reference measures are implemented for d <= 3"));
        }
        let beta = q + (dim as f64 + 1.0) / 2.0;
        // r = tan(theta) maps [0, inf) onto [0, pi/2)
        let radial = integrate_adaptive(
            |th: f64| th.tan().powi(dim as i32 - 1) * th.cos().powf(2.0 * beta - 2.0),
            0.0,
            FRAC_PI_2,
            1e-13,
            0.0,
        )?;
        Ok(Self { kind: MeasureKind::Weighted { q }, dim, normalization: sphere_area(dim) * radial })
    }

    pub fn lebesgue(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || dim > 3 || upper.len() != dim || lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::param("Lebesgue box needs 1..=3 axes with lower < upper"));
        }
        let vol = lower.iter().zip(&upper).map(|(a, b)| b - a).product();
        Ok(Self { kind: MeasureKind::Lebesgue { lower, upper }, dim, normalization: vol })
    }

    pub fn from_kind(kind: MeasureKind, dim: usize) -> Result<Self> {
        match kind {
            MeasureKind::Weighted { q } => Self::weighted(q, dim),
            MeasureKind::Lebesgue { lower, upper } => {
                if lower.len() != dim {
                    return Err(Error::param("Lebesgue box dimension disagrees with d"));
                }
                Self::lebesgue(lower, upper)
            }
        }
    }

    /// `beta = q + (d + 1) / 2` for the weighted kind.
    pub fn beta(&self) -> Option<f64> {
        match self.kind {
            MeasureKind::Weighted { q } => Some(q + (self.dim as f64 + 1.0) / 2.0),
            MeasureKind::Lebesgue { .. } => None,
        }
    }

    /// Normalised density at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.kind {
            MeasureKind::Weighted { .. } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (1.0 + r2).powf(-self.beta().unwrap_or(0.0)) / self.normalization
            }
            MeasureKind::Lebesgue { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| *v >= *a && *v <= *b);
                if inside { 1.0 / self.normalization } else { 0.0 }
            }
        }
    }

    /// `mu(|x| <= r)` by quadrature (weighted kind only).
    pub fn radial_cdf(&self, r: f64) -> Result<f64> {
        let beta = self.beta().ok_or_else(|| Error::Capability("radial law of a box measure".into()))?;
        if r <= 0.0 {
            return Ok(0.0);
        }
        let d = self.dim as i32;
        let part = integrate_adaptive(
            |th: f64| th.tan().powi(d - 1) * th.cos().powf(2.0 * beta - 2.0),
            0.0,
            r.atan(),
            1e-13,
            0.0,
        )?;
        Ok(sphere_area(self.dim) * part / self.normalization)
    }

    /// `int |x|^k dmu` by quadrature (weighted kind only).
    pub fn radial_moment(&self, k: f64) -> Result<f64> {
        let beta = self.beta().ok_or_else(|| Error::Capability("radial law of a box measure".into()))?;
        let d = self.dim as i32;
        let v = integrate_adaptive(
            |th: f64| th.tan().powf(k + (d - 1) as f64) * th.cos().powf(2.0 * beta - 2.0),
            0.0,
            FRAC_PI_2,
            1e-12,
            0.0,
        )?;
        Ok(sphere_area(self.dim) * v / self.normalization)
    }

    /// Cell centres of `grid` weighted by `mu(cell)`; a deterministic
    /// quadrature of `mu` restricted to the grid box and renormalised.
    pub fn quadrature_points(&self, grid: &GridSpec) -> Result<StartPoints> {
        if grid.dim() != self.dim {
            return Err(Error::param("grid dimension differs from the measure"));
        }
        let mut coords = Vec::with_capacity(grid.len() * self.dim);
        let mut weights = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let x = grid.center(i);
            let w = self.density(&x);
            if w > 0.0 {
                coords.extend_from_slice(&x);
                weights.push(w);
            }
        }
        StartPoints::new(self.dim, coords, weights)
    }

    /// `n` i.i.d. samples with equal weights.
    ///
    /// Weighted kind: `|x|^2 / (1 + |x|^2) ~ Beta(d/2, beta - d/2)` with an
    /// independent uniform direction.
    pub fn sample(&self, n: usize, seed: u64) -> Result<StartPoints> {
        if n == 0 {
            return Err(Error::param("need at least one sample"));
        }
        let d = self.dim;
        let beta_law = match self.beta() {
            Some(b) => Some(Beta::new(d as f64 / 2.0, b - d as f64 / 2.0).map_err(|e| Error::param(e.to_string()))?),
            None => None,
        };
        let chunks: Vec<Vec<f64>> = (0..n.div_ceil(SAMPLE_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut rng = stream(seed, Purpose::Starts, c as u64);
                let count = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
                let mut out = Vec::with_capacity(count * d);
                for _ in 0..count {
                    match (&self.kind, &beta_law) {
                        (MeasureKind::Weighted { .. }, Some(law)) => {
                            let u: f64 = law.sample(&mut rng);
                            let r = (u / (1.0 - u)).sqrt();
                            let mut dir = [0.0; 3];
                            let len = loop {
                                for v in dir[..d].iter_mut() {
                                    *v = StandardNormal.sample(&mut rng);
                                }
                                let l = dir[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                                if l > 1e-300 {
                                    break l;
                                }
                            };
                            out.extend(dir[..d].iter().map(|v| r * v / len));
                        }
                        (MeasureKind::Lebesgue { lower, upper }, _) => {
                            use rand::Rng;
                            for (a, b) in lower.iter().zip(upper) {
                                out.push(a + (b - a) * rng.gen::<f64>());
                            }
                        }
                        _ => unreachable!(),
                    }
                }
                out
            })
            .collect();
        StartPoints::uniform(d, chunks.concat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MeanEstimate;

    #[test]
    fn normalisation_matches_closed_forms() {
        // pi^{d/2} Gamma(beta - d/2) / Gamma(beta)
        let m = WeightedMeasure::weighted(2.0, 1).unwrap();
        assert!((m.normalization - 3.0 * PI / 8.0).abs() < 1e-12);
        let m = WeightedMeasure::weighted(1.5, 2).unwrap();
        assert!((m.normalization - PI / 2.0).abs() < 1e-12);
        let m = WeightedMeasure::weighted(2.0, 3).unwrap();
        // beta = 4: pi^{3/2} Gamma(5/2) / Gamma(4) = pi^2 / 8
        assert!((m.normalization - PI * PI / 8.0).abs() < 1e-12);
        assert!((m.radial_cdf(1e9).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn q_at_most_one_rejected() {
        assert!(matches!(WeightedMeasure::weighted(1.0, 2), Err(Error::Parameter(_))));
        assert!(WeightedMeasure::lebesgue(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn lebesgue_mean_is_zero() {
        let m = WeightedMeasure::lebesgue(vec![-1.0], vec![1.0]).unwrap();
        let s = m.sample(50_000, 3).unwrap();
        let e = MeanEstimate::from_samples(s.coords());
        assert!(e.mean.abs() < 3.0 * e.stderr);
        assert!(s.coords().iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn weighted_1d_unit_ball_probability() {
        let m = WeightedMeasure::weighted(2.0, 1).unwrap();
        let s = m.sample(100_000, 8).unwrap();
        let hits: Vec<f64> = s.coords().iter().map(|x| if x.abs() <= 1.0 { 1.0 } else { 0.0 }).collect();
        let e = MeanEstimate::from_samples(&hits);
        let oracle = integrate_adaptive(|x| m.density(&[x]), -1.0, 1.0, 1e-13, 0.0).unwrap();
        assert!((e.mean - oracle).abs() < 3.0 * e.stderr, "{e:?} vs {oracle}");
        assert!((m.radial_cdf(1.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn weighted_2d_second_moment() {
        let m = WeightedMeasure::weighted(1.5, 2).unwrap();
        let s = m.sample(100_000, 9).unwrap();
        let r2: Vec<f64> = s.coords().chunks(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        let e = MeanEstimate::from_samples(&r2);
        // beta = 3: pi B(2, 1) / (pi / 2) = 1
        let oracle = m.radial_moment(2.0).unwrap();
        assert!((oracle - 1.0).abs() < 1e-10);
        assert!((e.mean - oracle).abs() < 3.0 * e.stderr, "{e:?} vs {oracle}");
    }

    #[test]
    fn radial_ks_statistic() {
        for (q, d) in [(2.0, 1), (1.5, 2), (3.0, 3)] {
            let m = WeightedMeasure::weighted(q, d).unwrap();
            let s = m.sample(100_000, 1).unwrap();
            let mut r: Vec<f64> = s.coords().chunks(d).map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            r.sort_by(f64::total_cmp);
            let n = r.len() as f64;
            let mut ks: f64 = 0.0;
            for (i, ri) in r.iter().enumerate().step_by(97) {
                let f = m.radial_cdf(*ri).unwrap();
                ks = ks.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
            }
            assert!(ks < 0.02, "q={q} d={d}: {ks}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = WeightedMeasure::weighted(2.0, 2).unwrap();
        assert_eq!(m.sample(10_000, 5).unwrap(), m.sample(10_000, 5).unwrap());
        assert_ne!(m.sample(100, 5).unwrap(), m.sample(100, 6).unwrap());
    }
}
