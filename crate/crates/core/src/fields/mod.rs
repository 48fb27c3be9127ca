//! Coefficient fields `sigma: R^d -> R^{d x m}` and `b: R^d -> R^d`.

mod builtin;
mod certify;
mod maximal;
mod tabulated;
mod vseries;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use builtin::{
    ConstantDrift, ConstantSigma, DiffusionSpec, DriftSpec, LinearDrift, PowerDrift, PowerSigma,
    RotationDrift, ShearDrift, TanhSigma,
};
pub use certify::{
    certify_condition, certify_hq, certify_hsigma, sobolev_weight, sweep_weight_scale, CertifySettings, Condition,
    OsgoodCertificate, Weight,
};
pub use maximal::{ball_radii, local_maximal_function};
pub use tabulated::{TabulatedMatrix, TabulatedVector};
pub use vseries::{eval_v_series, VSeriesDrift, VSeriesValue, DEFAULT_V_TERMS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    Analytic,
    GridTabulated,
    Mollified,
}

/// `b: R^d -> R^d`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Writes `J[i * d + j] = d_j b_i`; returns `false` when no analytic
    /// Jacobian exists.
    fn jacobian(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Analytic
    }

    fn name(&self) -> String;
}

/// `sigma: R^d -> R^{d x m}`, row-major: `out[i * m + k] = sigma^{ik}`.
pub trait MatrixField: Send + Sync {
    fn rows(&self) -> usize;

    fn cols(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Writes `out[(l * d + i) * m + k] = d_l sigma^{ik}`; `false` when no
    /// analytic gradient exists.
    fn gradient(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// `true` when sigma does not depend on x (enables cheaper stepping).
    fn is_constant(&self) -> bool {
        false
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Analytic
    }

    fn name(&self) -> String;
}

/// The pair `(sigma, b)` driving `dX = sigma(X) dB + b(X) dt`.
#[derive(Clone)]
pub struct CoefficientPair {
    pub sigma: Arc<dyn MatrixField>,
    pub drift: Arc<dyn VectorField>,
}

impl fmt::Debug for CoefficientPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientPair")
            .field("sigma", &self.sigma.name())
            .field("drift", &self.drift.name())
            .field("d", &self.dim())
            .field("m", &self.noise_dim())
            .finish()
    }
}

/// Default finite-difference step for derivative fallbacks.
pub const FD_STEP: f64 = 1e-4;

impl CoefficientPair {
    pub fn new(sigma: Arc<dyn MatrixField>, drift: Arc<dyn VectorField>) -> Result<Self> {
        if sigma.rows() != drift.dim() {
            return Err(Error::param(format!(
                "sigma has {} rows but the drift lives in R^{}",
                sigma.rows(),
                drift.dim()
            )));
        }
        if sigma.cols() == 0 {
            return Err(Error::param("noise dimension must be positive"));
        }
        Ok(Self { sigma, drift })
    }

    /// Builds the pair from config specs.
    pub fn from_specs(drift: &DriftSpec, diffusion: &DiffusionSpec, d: usize, m: usize) -> Result<Self> {
        Self::new(diffusion.build(d, m)?, drift.build(d)?)
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.sigma.cols()
    }

    /// Roughest of the two components.
    pub fn smoothness(&self) -> Smoothness {
        use Smoothness::*;
        match (self.sigma.smoothness(), self.drift.smoothness()) {
            (GridTabulated, _) | (_, GridTabulated) => GridTabulated,
            (Mollified, _) | (_, Mollified) => Mollified,
            _ => Analytic,
        }
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift.eval(x, &mut out);
        out
    }

    pub fn sigma_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() * self.noise_dim()];
        self.sigma.eval(x, &mut out);
        out
    }

    /// `a = sigma sigma^T`, row-major `d x d`.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Vec<f64> {
        let (d, m) = (self.dim(), self.noise_dim());
        let s = self.sigma_at(x);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            }
        }
        a
    }

    /// `div b`, analytic when available, central differences with step `h`
    /// otherwise.
    pub fn divergence(&self, x: &[f64], h: f64) -> f64 {
        if let Some(v) = self.drift.divergence(x) {
            return v;
        }
        divergence_fd(self.drift.as_ref(), x, h)
    }

    /// Jacobian of `b`, analytic or by central differences.
    pub fn drift_jacobian(&self, x: &[f64], h: f64) -> Vec<f64> {
        let d = self.dim();
        let mut j = vec![0.0; d * d];
        if self.drift.jacobian(x, &mut j) {
            return j;
        }
        let (mut xp, mut fp, mut fm) = (x.to_vec(), vec![0.0; d], vec![0.0; d]);
        for c in 0..d {
            xp[c] = x[c] + h;
            self.drift.eval(&xp, &mut fp);
            xp[c] = x[c] - h;
            self.drift.eval(&xp, &mut fm);
            xp[c] = x[c];
            for i in 0..d {
                j[i * d + c] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        j
    }

    /// `d_l sigma^{ik}` at `out[(l * d + i) * m + k]`, analytic or by
    /// central differences with step `h`.
    pub fn sigma_gradient(&self, x: &[f64], h: f64) -> Vec<f64> {
        let (d, m) = (self.dim(), self.noise_dim());
        let mut g = vec![0.0; d * d * m];
        if self.sigma.gradient(x, &mut g) {
            return g;
        }
        sigma_gradient_fd(self.sigma.as_ref(), x, h, &mut g);
        g
    }
}

/// `sum_i (b_i(x + h e_i) - b_i(x - h e_i)) / 2h`.
pub fn divergence_fd(field: &dyn VectorField, x: &[f64], h: f64) -> f64 {
    let d = field.dim();
    let mut xp = x.to_vec();
    let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
    let mut acc = 0.0;
    for i in 0..d {
        xp[i] = x[i] + h;
        field.eval(&xp, &mut fp);
        xp[i] = x[i] - h;
        field.eval(&xp, &mut fm);
        xp[i] = x[i];
        acc += (fp[i] - fm[i]) / (2.0 * h);
    }
    acc
}

pub(crate) fn sigma_gradient_fd(sigma: &dyn MatrixField, x: &[f64], h: f64, out: &mut [f64]) {
    let (d, m) = (sigma.rows(), sigma.cols());
    let mut xp = x.to_vec();
    let (mut sp, mut sm) = (vec![0.0; d * m], vec![0.0; d * m]);
    for l in 0..d {
        xp[l] = x[l] + h;
        sigma.eval(&xp, &mut sp);
        xp[l] = x[l] - h;
        sigma.eval(&xp, &mut sm);
        xp[l] = x[l];
        for ik in 0..d * m {
            out[l * d * m + ik] = (sp[ik] - sm[ik]) / (2.0 * h);
        }
    }
}

/// Free-function form of [`CoefficientPair::divergence`].
pub fn divergence(pair: &CoefficientPair, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::param(format!("finite-difference step must be positive, got {h}")));
    }
    Ok(pair.divergence(x, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(drift: DriftSpec, d: usize) -> CoefficientPair {
        CoefficientPair::from_specs(&drift, &DiffusionSpec::Zero, d, d).unwrap()
    }

    #[test]
    fn divergence_examples() {
        let p = pair(DriftSpec::Linear { scale: 1.0 }, 3);
        assert_eq!(divergence(&p, &[0.3, -1.0, 2.0], 1e-3).unwrap(), 3.0);
        let p = pair(DriftSpec::Constant { value: vec![1.0, -2.0] }, 2);
        assert_eq!(divergence(&p, &[0.5, 0.5], 1e-3).unwrap(), 0.0);
        let p = pair(DriftSpec::Shear, 2);
        for x in [[0.1, 0.2], [1.3, -2.4], [-3.0, 5.0]] {
            assert_eq!(divergence(&p, &x, 1e-3).unwrap(), 0.0);
            assert!(divergence_fd(p.drift.as_ref(), &x, 1e-3).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_step_rejected() {
        let p = pair(DriftSpec::Zero, 1);
        assert!(divergence(&p, &[0.0], 0.0).is_err());
    }

    #[test]
    fn fd_divergence_is_second_order() {
        // b_i = |x_i|^1.5, away from the origin: analytic divergence exists
        let p = pair(DriftSpec::SobolevPower { exponent: 1.5 }, 2);
        let x = [0.7, 1.1];
        let exact = p.drift.divergence(&x).unwrap();
        let e1 = (divergence_fd(p.drift.as_ref(), &x, 1e-2) - exact).abs();
        let e2 = (divergence_fd(p.drift.as_ref(), &x, 5e-3) - exact).abs();
        let ratio = e2 / e1;
        assert!((ratio - 0.25).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let s = DiffusionSpec::Constant { scale: 1.0 }.build(2, 2).unwrap();
        let b = DriftSpec::Zero.build(3).unwrap();
        assert!(CoefficientPair::new(s, b).is_err());
    }

    #[test]
    fn diffusion_matrix_is_sigma_sigma_t() {
        let p = CoefficientPair::from_specs(&DriftSpec::Zero, &DiffusionSpec::Constant { scale: 2f64.sqrt() }, 2, 3).unwrap();
        let a = p.diffusion_matrix(&[0.0, 0.0]);
        assert!((a[0] - 2.0).abs() < 1e-15 && (a[3] - 2.0).abs() < 1e-15);
        assert_eq!(a[1], 0.0);
    }
}
