use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tabulated::{TabulatedMatrix, TabulatedVector};
use super::vseries::{VSeriesDrift, DEFAULT_V_TERMS};
use super::{MatrixField, VectorField};
use crate::{Error, Result};

fn one() -> f64 {
    1.0
}

fn default_terms() -> usize {
    DEFAULT_V_TERMS
}

fn default_power() -> f64 {
    0.9
}

/// Config description of a drift field, keyed by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftSpec {
    Zero,
    Constant { value: Vec<f64> },
    /// `b(x) = scale * x`.
    Linear {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `b(x) = -theta * x`.
    Ou {
        #[serde(default = "one")]
        theta: f64,
    },
    /// `b(x) = (V(x_1), ..., V(x_d))`, `V(t) = sum_k |sin kt| / k^2`.
    Vseries {
        #[serde(default = "default_terms")]
        terms: usize,
        /// Optional lookup-table resolution on `[0, pi/2]`.
        #[serde(default)]
        table_points: Option<usize>,
    },
    /// `b(x) = rate * (-x_2, x_1)`, d = 2.
    Rotation {
        #[serde(default = "one")]
        rate: f64,
    },
    /// `b(x) = (sin x_2, cos x_1)`, d = 2.
    Shear,
    /// `b_i(x) = |x_i|^exponent`.
    SobolevPower {
        #[serde(default = "default_power")]
        exponent: f64,
    },
    /// Grid-tabulated field read from CSV.
    Tabulated { path: PathBuf },
}

impl DriftSpec {
    pub fn key(&self) -> &'static str {
        match self {
            DriftSpec::Zero => "zero",
            DriftSpec::Constant { .. } => "constant",
            DriftSpec::Linear { .. } => "linear",
            DriftSpec::Ou { .. } => "ou",
            DriftSpec::Vseries { .. } => "vseries",
            DriftSpec::Rotation { .. } => "rotation",
            DriftSpec::Shear => "shear",
            DriftSpec::SobolevPower { .. } => "sobolev-power",
            DriftSpec::Tabulated { .. } => "tabulated",
        }
    }

    pub fn build(&self, d: usize) -> Result<Arc<dyn VectorField>> {
        if d == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        let need_2d = |name: &str| {
            if d == 2 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} drift is only defined for d = 2, got d = {d}")))
            }
        };
        Ok(match self {
            DriftSpec::Zero => Arc::new(ConstantDrift { value: vec![0.0; d] }),
            DriftSpec::Constant { value } => {
                if value.len() != d {
                    return Err(Error::param(format!("constant drift has {} entries, d = {d}", value.len())));
                }
                Arc::new(ConstantDrift { value: value.clone() })
            }
            DriftSpec::Linear { scale } => Arc::new(LinearDrift { dim: d, scale: *scale }),
            DriftSpec::Ou { theta } => Arc::new(LinearDrift { dim: d, scale: -theta }),
            DriftSpec::Vseries { terms, table_points } => {
                if *terms == 0 {
                    return Err(Error::param("V-series needs at least one term"));
                }
                let v = VSeriesDrift::new(d, *terms);
                Arc::new(match table_points {
                    Some(n) => v.with_table(*n)?,
                    None => v,
                })
            }
            DriftSpec::Rotation { rate } => {
                need_2d("rotation")?;
                Arc::new(RotationDrift { rate: *rate })
            }
            DriftSpec::Shear => {
                need_2d("shear")?;
                Arc::new(ShearDrift)
            }
            DriftSpec::SobolevPower { exponent } => Arc::new(PowerDrift { dim: d, exponent: *exponent }),
            DriftSpec::Tabulated { path } => {
                let t = TabulatedVector::from_csv(path)?;
                if t.dim() != d {
                    return Err(Error::param(format!("tabulated drift has d = {}, expected {d}", t.dim())));
                }
                Arc::new(t)
            }
        })
    }
}

/// Config description of a diffusion matrix field, keyed by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DiffusionSpec {
    Zero,
    /// `scale * I_{d x m}` (rectangular identity).
    Constant {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `sigma^{ii}(x) = scale * tanh(x_i)`.
    Tanh {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `sigma^{ii}(x) = |x_i|^exponent`.
    SobolevPower {
        #[serde(default = "default_power")]
        exponent: f64,
    },
    Tabulated { path: PathBuf },
}

impl DiffusionSpec {
    pub fn key(&self) -> &'static str {
        match self {
            DiffusionSpec::Zero => "zero",
            DiffusionSpec::Constant { .. } => "constant",
            DiffusionSpec::Tanh { .. } => "tanh",
            DiffusionSpec::SobolevPower { .. } => "sobolev-power",
            DiffusionSpec::Tabulated { .. } => "tabulated",
        }
    }

    pub fn build(&self, d: usize, m: usize) -> Result<Arc<dyn MatrixField>> {
        if d == 0 || m == 0 {
            return Err(Error::param("dimensions must be positive"));
        }
        Ok(match self {
            DiffusionSpec::Zero => Arc::new(ConstantSigma::scaled_identity(d, m, 0.0)),
            DiffusionSpec::Constant { scale } => Arc::new(ConstantSigma::scaled_identity(d, m, *scale)),
            DiffusionSpec::Tanh { scale } => Arc::new(TanhSigma { rows: d, cols: m, scale: *scale }),
            DiffusionSpec::SobolevPower { exponent } => {
                Arc::new(PowerSigma { rows: d, cols: m, exponent: *exponent })
            }
            DiffusionSpec::Tabulated { path } => {
                let t = TabulatedMatrix::from_csv(path, m)?;
                if t.rows() != d {
                    return Err(Error::param(format!("tabulated sigma has d = {}, expected {d}", t.rows())));
                }
                Arc::new(t)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConstantDrift {
    pub value: Vec<f64>,
}

impl VectorField for ConstantDrift {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }

    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        if self.value.iter().all(|v| *v == 0.0) { "zero".into() } else { "constant".into() }
    }
}

#[derive(Debug, Clone)]
pub struct LinearDrift {
    pub dim: usize,
    pub scale: f64,
}

impl VectorField for LinearDrift {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.scale * v;
        }
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        for i in 0..self.dim {
            out[i * self.dim + i] = self.scale;
        }
        true
    }

    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        Some(self.scale * self.dim as f64)
    }

    fn name(&self) -> String {
        format!("linear({})", self.scale)
    }
}

#[derive(Debug, Clone)]
pub struct RotationDrift {
    pub rate: f64,
}

impl VectorField for RotationDrift {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.rate * x[1];
        out[1] = self.rate * x[0];
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(&[0.0, -self.rate, self.rate, 0.0]);
        true
    }

    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        "rotation".into()
    }
}

#[derive(Debug, Clone)]
pub struct ShearDrift;

impl VectorField for ShearDrift {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[1].sin();
        out[1] = x[0].cos();
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(&[0.0, x[1].cos(), -x[0].sin(), 0.0]);
        true
    }

    fn divergence(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        "shear".into()
    }
}

#[derive(Debug, Clone)]
pub struct PowerDrift {
    pub dim: usize,
    pub exponent: f64,
}

fn power_derivative(t: f64, exponent: f64) -> f64 {
    if t == 0.0 {
        if exponent > 1.0 { 0.0 } else { f64::INFINITY }
    } else {
        exponent * t.abs().powf(exponent - 1.0) * t.signum()
    }
}

impl VectorField for PowerDrift {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v.abs().powf(self.exponent);
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        for i in 0..self.dim {
            out[i * self.dim + i] = power_derivative(x[i], self.exponent);
        }
        true
    }

    fn divergence(&self, x: &[f64]) -> Option<f64> {
        Some(x.iter().map(|&t| power_derivative(t, self.exponent)).sum())
    }

    fn name(&self) -> String {
        format!("sobolev-power({})", self.exponent)
    }
}

/// Constant `d x m` matrix.
#[derive(Debug, Clone)]
pub struct ConstantSigma {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ConstantSigma {
    pub fn scaled_identity(rows: usize, cols: usize, scale: f64) -> Self {
        let mut values = vec![0.0; rows * cols];
        for i in 0..rows.min(cols) {
            values[i * cols + i] = scale;
        }
        Self { rows, cols, values }
    }
}

impl MatrixField for ConstantSigma {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.values);
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }

    fn is_constant(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "constant".into()
    }
}

#[derive(Debug, Clone)]
pub struct TanhSigma {
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
}

impl MatrixField for TanhSigma {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.rows.min(self.cols) {
            out[i * self.cols + i] = self.scale * x[i].tanh();
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        let (d, m) = (self.rows, self.cols);
        for i in 0..d.min(m) {
            let c = x[i].cosh();
            out[(i * d + i) * m + i] = self.scale / (c * c);
        }
        true
    }

    fn name(&self) -> String {
        "tanh".into()
    }
}

#[derive(Debug, Clone)]
pub struct PowerSigma {
    pub rows: usize,
    pub cols: usize,
    pub exponent: f64,
}

impl MatrixField for PowerSigma {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.rows.min(self.cols) {
            out[i * self.cols + i] = x[i].abs().powf(self.exponent);
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        let (d, m) = (self.rows, self.cols);
        for i in 0..d.min(m) {
            out[(i * d + i) * m + i] = power_derivative(x[i], self.exponent);
        }
        true
    }

    fn name(&self) -> String {
        format!("sobolev-power({})", self.exponent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse_from_toml() {
        #[derive(Deserialize)]
        struct W {
            drift: DriftSpec,
            diffusion: DiffusionSpec,
        }
        let w: W = toml::from_str(
            r#"
            drift = { kind = "vseries", terms = 100 }
            diffusion = { kind = "constant", scale = 0.5 }
            "#,
        )
        .unwrap();
        assert_eq!(w.drift, DriftSpec::Vseries { terms: 100, table_points: None });
        assert_eq!(w.diffusion, DiffusionSpec::Constant { scale: 0.5 });
        let w: W = toml::from_str("drift = { kind = \"ou\" }\ndiffusion = { kind = \"sobolev-power\" }").unwrap();
        assert_eq!(w.drift, DriftSpec::Ou { theta: 1.0 });
        assert_eq!(w.diffusion, DiffusionSpec::SobolevPower { exponent: 0.9 });
    }

    #[test]
    fn analytic_jacobians_match_fd() {
        let check = |spec: DriftSpec, d: usize, x: &[f64]| {
            let f = spec.build(d).unwrap();
            let mut j = vec![0.0; d * d];
            assert!(f.jacobian(x, &mut j));
            let h = 1e-6;
            let mut xp = x.to_vec();
            let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
            for c in 0..d {
                xp[c] = x[c] + h;
                f.eval(&xp, &mut a);
                xp[c] = x[c] - h;
                f.eval(&xp, &mut b);
                xp[c] = x[c];
                for i in 0..d {
                    assert!((j[i * d + c] - (a[i] - b[i]) / (2.0 * h)).abs() < 1e-7);
                }
            }
        };
        check(DriftSpec::Rotation { rate: 1.5 }, 2, &[0.3, -0.2]);
        check(DriftSpec::Shear, 2, &[0.3, -0.2]);
        check(DriftSpec::Ou { theta: 2.0 }, 3, &[0.3, -0.2, 1.0]);
        check(DriftSpec::SobolevPower { exponent: 0.9 }, 2, &[0.3, -0.2]);
    }

    #[test]
    fn rotation_needs_two_dims() {
        assert!(DriftSpec::Rotation { rate: 1.0 }.build(3).is_err());
    }
}
