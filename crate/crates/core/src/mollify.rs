//! Regularisation `sigma_n = (sigma * chi_n) phi_n`, `b_n = (b * chi_n) phi_n`
//! with `chi_n(x) = n^d chi(n x)` and `phi_n(x) = phi(x / n)`.
//!
//! Convolutions are evaluated lazily at each query point against a cached
//! tensor-product node set on the unit ball.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fields::{CoefficientPair, MatrixField, Smoothness, TabulatedMatrix, TabulatedVector, VectorField};
use crate::grid::GridSpec;
use crate::quadrature::{composite_rule, integrate_adaptive};
use crate::{Error, Result};

/// Default Gauss points per axis on `[-1, 1]`.
pub const DEFAULT_QUADRATURE_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MollifyMode {
    #[default]
    Convolve,
    /// Cutoff only, `sigma_n = sigma phi_n`.
    CutoffOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub level: usize,
    pub quadrature_points: usize,
    pub mode: MollifyMode,
}

impl MollifierSpec {
    pub fn new(level: usize) -> Self {
        Self { level, quadrature_points: DEFAULT_QUADRATURE_POINTS, mode: MollifyMode::Convolve }
    }

    pub fn with_points(mut self, q: usize) -> Self {
        self.quadrature_points = q;
        self
    }

    pub fn with_mode(mut self, mode: MollifyMode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.level == 0 {
            return Err(Error::param("mollification level n must be >= 1"));
        }
        if self.quadrature_points < 4 {
            return Err(Error::param("need at least 4 quadrature points per axis"));
        }
        Ok(())
    }
}

/// Unnormalised bump `exp(-1 / (1 - |y|^2))` on the unit ball.
#[inline]
pub fn raw_bump(r2: f64) -> f64 {
    if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 }
}

/// `1 / int_{B_1} raw_bump`, by adaptive radial quadrature.
pub fn bump_normalization(dim: usize) -> f64 {
    let sphere = match dim {
        1 => 2.0,
        2 => std::f64::consts::TAU,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("bump normalisation implemented for d <= 3"),
    };
    let radial = integrate_adaptive(|r| r.powi(dim as i32 - 1) * raw_bump(r * r), 0.0, 1.0, 1e-14, 0.0)
        .expect("smooth integrand");
    1.0 / (sphere * radial)
}

#[inline]
fn smooth_step_piece(t: f64) -> f64 {
    if t > 0.0 { (-1.0 / t).exp() } else { 0.0 }
}

/// Smooth cutoff: `1` on `B_1`, `0` outside `B_2`, values in `[0, 1]`.
pub fn cutoff(x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let t = 2.0 - r;
    let (a, b) = (smooth_step_piece(t), smooth_step_piece(1.0 - t));
    a / (a + b)
}

/// `grad cutoff(x)` written into `out`.
pub fn cutoff_gradient(x: &[f64], out: &mut [f64]) {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.fill(0.0);
    if r <= 1.0 || r >= 2.0 {
        return;
    }
    let t = 2.0 - r;
    let (a, b) = (smooth_step_piece(t), smooth_step_piece(1.0 - t));
    let (da, db) = (a / (t * t), -b / ((1.0 - t) * (1.0 - t)));
    let ds = (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
    for (o, v) in out.iter_mut().zip(x) {
        *o = -ds * v / r;
    }
}

/// Cached nodes `y_q` in the unit ball with weights `w_q chi(y_q)` and
/// `w_q grad chi(y_q)`.
#[derive(Debug)]
pub struct BumpNodes {
    points: Vec<f64>,
    weights: Vec<f64>,
    grad_weights: Vec<f64>,
    /// `|sum w_q c chi(y_q) - 1|` before the discrete renormalisation.
    pub mass_error: f64,
}

impl BumpNodes {
    pub fn new(dim: usize, per_axis: usize) -> Self {
        let panels = per_axis.div_ceil(4);
        let (gx, gw) = composite_rule(-1.0, 1.0, panels, 4);
        let c = bump_normalization(dim);
        let n1 = gx.len();
        let total = n1.pow(dim as u32);
        let (mut points, mut weights, mut grad_weights) = (Vec::new(), Vec::new(), Vec::new());
        for flat in 0..total {
            let mut rest = flat;
            let mut y = [0.0; 3];
            let mut w = 1.0;
            for a in 0..dim {
                let i = rest % n1;
                rest /= n1;
                y[a] = gx[i];
                w *= gw[i];
            }
            let r2: f64 = y[..dim].iter().map(|v| v * v).sum();
            let chi = raw_bump(r2);
            if chi == 0.0 {
                continue;
            }
            points.extend_from_slice(&y[..dim]);
            weights.push(w * c * chi);
            // grad exp(-1/(1-r^2)) = chi * (-2 y / (1 - r^2)^2)
            let g = -2.0 / ((1.0 - r2) * (1.0 - r2));
            for &ya in &y[..dim] {
                grad_weights.push(w * c * chi * g * ya);
            }
        }
        let mass: f64 = crate::stats::pairwise_sum(&weights);
        let mass_error = (mass - 1.0).abs();
        for w in weights.iter_mut() {
            *w /= mass;
        }
        for w in grad_weights.iter_mut() {
            *w /= mass;
        }
        Self { points, weights, grad_weights, mass_error }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `b_n` for a vector field.
pub struct MollifiedVector {
    base: Arc<dyn VectorField>,
    spec: MollifierSpec,
    nodes: Arc<BumpNodes>,
}

impl MollifiedVector {
    pub fn new(base: Arc<dyn VectorField>, spec: MollifierSpec) -> Result<Self> {
        spec.validate()?;
        let nodes = Arc::new(BumpNodes::new(base.dim(), spec.quadrature_points));
        Ok(Self { base, spec, nodes })
    }

    fn convolve(&self, x: &[f64], out: &mut [f64], grad: Option<&mut [f64]>) {
        let d = self.base.dim();
        let inv_n = 1.0 / self.spec.level as f64;
        let mut shifted = [0.0; 3];
        let mut val = [0.0; 3];
        out.fill(0.0);
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        for q in 0..self.nodes.len() {
            let y = &self.nodes.points[q * d..(q + 1) * d];
            for a in 0..d {
                shifted[a] = x[a] - y[a] * inv_n;
            }
            self.base.eval(&shifted[..d], &mut val[..d]);
            let w = self.nodes.weights[q];
            for i in 0..d {
                out[i] += w * val[i];
            }
            if let Some(g) = grad.as_deref_mut() {
                let gw = &self.nodes.grad_weights[q * d..(q + 1) * d];
                for i in 0..d {
                    for j in 0..d {
                        g[i * d + j] += val[i] * gw[j];
                    }
                }
            }
        }
        if let Some(g) = grad {
            let n = self.spec.level as f64;
            for v in g.iter_mut() {
                *v *= n;
            }
        }
    }
}

impl VectorField for MollifiedVector {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let n = self.spec.level as f64;
        let scaled: Vec<f64> = x.iter().map(|v| v / n).collect();
        let phi = cutoff(&scaled);
        if phi == 0.0 {
            out[..d].fill(0.0);
            return;
        }
        match self.spec.mode {
            MollifyMode::Convolve => self.convolve(x, out, None),
            MollifyMode::CutoffOnly => self.base.eval(x, out),
        }
        for o in out.iter_mut() {
            *o *= phi;
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        let d = self.dim();
        let n = self.spec.level as f64;
        let scaled: Vec<f64> = x.iter().map(|v| v / n).collect();
        let phi = cutoff(&scaled);
        let mut dphi = vec![0.0; d];
        cutoff_gradient(&scaled, &mut dphi);
        for v in dphi.iter_mut() {
            *v /= n;
        }
        let mut val = vec![0.0; d];
        match self.spec.mode {
            MollifyMode::Convolve => self.convolve(x, &mut val, Some(out)),
            MollifyMode::CutoffOnly => {
                if !self.base.jacobian(x, out) {
                    return false;
                }
                self.base.eval(x, &mut val);
            }
        }
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = phi * out[i * d + j] + val[i] * dphi[j];
            }
        }
        true
    }

    fn divergence(&self, x: &[f64]) -> Option<f64> {
        let d = self.dim();
        let mut j = vec![0.0; d * d];
        self.jacobian(x, &mut j).then(|| (0..d).map(|i| j[i * d + i]).sum())
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Mollified
    }

    fn name(&self) -> String {
        format!("mollified[{}]({})", self.spec.level, self.base.name())
    }
}

/// `sigma_n` for a matrix field.
pub struct MollifiedMatrix {
    base: Arc<dyn MatrixField>,
    spec: MollifierSpec,
    nodes: Arc<BumpNodes>,
}

impl MollifiedMatrix {
    pub fn new(base: Arc<dyn MatrixField>, spec: MollifierSpec) -> Result<Self> {
        spec.validate()?;
        let nodes = Arc::new(BumpNodes::new(base.rows(), spec.quadrature_points));
        Ok(Self { base, spec, nodes })
    }

    fn convolve(&self, x: &[f64], out: &mut [f64], grad: Option<&mut [f64]>) {
        let (d, m) = (self.base.rows(), self.base.cols());
        let inv_n = 1.0 / self.spec.level as f64;
        let mut shifted = vec![0.0; d];
        let mut val = vec![0.0; d * m];
        out.fill(0.0);
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        for q in 0..self.nodes.len() {
            let y = &self.nodes.points[q * d..(q + 1) * d];
            for a in 0..d {
                shifted[a] = x[a] - y[a] * inv_n;
            }
            self.base.eval(&shifted, &mut val);
            let w = self.nodes.weights[q];
            for (o, v) in out.iter_mut().zip(&val) {
                *o += w * v;
            }
            if let Some(g) = grad.as_deref_mut() {
                let gw = &self.nodes.grad_weights[q * d..(q + 1) * d];
                for l in 0..d {
                    for ik in 0..d * m {
                        g[l * d * m + ik] += gw[l] * val[ik];
                    }
                }
            }
        }
        if let Some(g) = grad {
            let n = self.spec.level as f64;
            for v in g.iter_mut() {
                *v *= n;
            }
        }
    }
}

impl MatrixField for MollifiedMatrix {
    fn rows(&self) -> usize {
        self.base.rows()
    }

    fn cols(&self) -> usize {
        self.base.cols()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let n = self.spec.level as f64;
        let scaled: Vec<f64> = x.iter().map(|v| v / n).collect();
        let phi = cutoff(&scaled);
        if phi == 0.0 {
            out.fill(0.0);
            return;
        }
        match self.spec.mode {
            MollifyMode::Convolve if !self.base.is_constant() => self.convolve(x, out, None),
            _ => self.base.eval(x, out),
        }
        for o in out.iter_mut() {
            *o *= phi;
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        let (d, m) = (self.rows(), self.cols());
        let n = self.spec.level as f64;
        let scaled: Vec<f64> = x.iter().map(|v| v / n).collect();
        let phi = cutoff(&scaled);
        let mut dphi = vec![0.0; d];
        cutoff_gradient(&scaled, &mut dphi);
        let mut val = vec![0.0; d * m];
        match self.spec.mode {
            MollifyMode::Convolve if !self.base.is_constant() => self.convolve(x, &mut val, Some(out)),
            _ => {
                if !self.base.gradient(x, out) {
                    return false;
                }
                self.base.eval(x, &mut val);
            }
        }
        for l in 0..d {
            for ik in 0..d * m {
                out[l * d * m + ik] = phi * out[l * d * m + ik] + val[ik] * dphi[l] / n;
            }
        }
        true
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Mollified
    }

    fn name(&self) -> String {
        format!("mollified[{}]({})", self.spec.level, self.base.name())
    }
}

/// Mollifies both coefficients at level `spec.level`.
pub fn mollify_pair(pair: &CoefficientPair, spec: MollifierSpec) -> Result<CoefficientPair> {
    let sigma: Arc<dyn MatrixField> = Arc::new(MollifiedMatrix::new(pair.sigma.clone(), spec)?);
    let drift: Arc<dyn VectorField> = Arc::new(MollifiedVector::new(pair.drift.clone(), spec)?);
    CoefficientPair::new(sigma, drift)
}

/// Samples both coefficients of `pair` on `grid` and keeps its smoothness
/// label. Constant diffusion matrices are kept as they are.
pub fn tabulate_pair(pair: &CoefficientPair, grid: &GridSpec) -> Result<CoefficientPair> {
    let label = pair.smoothness();
    let drift: Arc<dyn VectorField> =
        Arc::new(TabulatedVector::tabulate(pair.drift.as_ref(), grid)?.with_smoothness(label));
    let sigma: Arc<dyn MatrixField> = if pair.sigma.is_constant() {
        pair.sigma.clone()
    } else {
        Arc::new(TabulatedMatrix::tabulate(pair.sigma.as_ref(), grid)?.with_smoothness(label))
    };
    CoefficientPair::new(sigma, drift)
}

/// Cube grid covering the cutoff support `B_{2n}` with `cells_per_unit`
/// cells per unit length.
pub fn support_grid(dim: usize, level: usize, cells_per_unit: f64) -> GridSpec {
    let half = 2.0 * level as f64 + 0.5;
    let cells = (2.0 * half * cells_per_unit).ceil().max(2.0) as usize;
    GridSpec::cube(dim, half, cells)
}

/// Mollified pair sampled on its support grid.
pub fn mollify_tabulated(pair: &CoefficientPair, spec: MollifierSpec, cells_per_unit: f64) -> Result<CoefficientPair> {
    let m = mollify_pair(pair, spec)?;
    tabulate_pair(&m, &support_grid(pair.dim(), spec.level, cells_per_unit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    L1,
    L2,
    Lp(f64),
}

impl Norm {
    fn exponent(self) -> f64 {
        match self {
            Norm::L1 => 1.0,
            Norm::L2 => 2.0,
            Norm::Lp(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MollificationDistance {
    pub drift: f64,
    pub sigma: f64,
}

/// Midpoint-rule `L^p(B_R)` norms of `b_n - b_l` and `sigma_n - sigma_l`
/// on a grid with `cells_per_axis` cells across `[-R, R]^d`.
pub fn mollification_distance(
    pair: &CoefficientPair,
    spec_n: MollifierSpec,
    spec_l: MollifierSpec,
    radius: f64,
    norm: Norm,
    cells_per_axis: usize,
) -> Result<MollificationDistance> {
    if !(radius > 0.0) {
        return Err(Error::param("ball radius must be positive"));
    }
    if spec_n == spec_l {
        spec_n.validate()?;
        return Ok(MollificationDistance { drift: 0.0, sigma: 0.0 });
    }
    let a = mollify_pair(pair, spec_n)?;
    let b = mollify_pair(pair, spec_l)?;
    field_distance(&a, &b, radius, norm, cells_per_axis)
}

/// `L^p(B_R)` distance between the coefficients of two pairs.
pub fn field_distance(
    a: &CoefficientPair,
    b: &CoefficientPair,
    radius: f64,
    norm: Norm,
    cells_per_axis: usize,
) -> Result<MollificationDistance> {
    use rayon::prelude::*;
    let d = a.dim();
    if b.dim() != d || b.noise_dim() != a.noise_dim() {
        return Err(Error::param("pairs have different dimensions"));
    }
    let grid = GridSpec::cube(d, radius, cells_per_axis);
    let p = norm.exponent();
    let rows: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.center(i);
            if x.iter().map(|v| v * v).sum::<f64>() > radius * radius {
                return (0.0, 0.0);
            }
            let db: f64 = a.drift_at(&x).iter().zip(b.drift_at(&x)).map(|(u, v)| (u - v) * (u - v)).sum();
            let ds: f64 = a.sigma_at(&x).iter().zip(b.sigma_at(&x)).map(|(u, v)| (u - v) * (u - v)).sum();
            (db.sqrt().powf(p), ds.sqrt().powf(p))
        })
        .collect();
    let vol = grid.cell_volume();
    let sum = |k: usize| {
        let v: Vec<f64> = rows.iter().map(|r| if k == 0 { r.0 } else { r.1 }).collect();
        (crate::stats::pairwise_sum(&v) * vol).powf(1.0 / p)
    };
    Ok(MollificationDistance { drift: sum(0), sigma: sum(1) })
}

/// `delta_{n,l} = (||sigma_n - sigma_l||_{L^{2q}(B_R)} + ||b_n - b_l||_{L^q(B_R)})^2`.
pub fn delta_nl(
    pair: &CoefficientPair,
    spec_n: MollifierSpec,
    spec_l: MollifierSpec,
    radius: f64,
    q: f64,
    cells_per_axis: usize,
) -> Result<f64> {
    let s = mollification_distance(pair, spec_n, spec_l, radius, Norm::Lp(2.0 * q), cells_per_axis)?;
    let b = mollification_distance(pair, spec_n, spec_l, radius, Norm::Lp(q), cells_per_axis)?;
    Ok((s.sigma + b.drift).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{eval_v_series, DiffusionSpec, DriftSpec};

    fn pair(drift: DriftSpec, sigma: DiffusionSpec, d: usize) -> CoefficientPair {
        CoefficientPair::from_specs(&drift, &sigma, d, d).unwrap()
    }

    #[test]
    fn bump_has_unit_mass() {
        for d in 1..=3 {
            let nodes = BumpNodes::new(d, if d == 3 { 128 } else { DEFAULT_QUADRATURE_POINTS });
            assert!(nodes.mass_error < 1e-8, "d = {d}: {}", nodes.mass_error);
            assert!((nodes.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cutoff_profile() {
        for r in [0.0, 0.5, 1.0] {
            assert_eq!(cutoff(&[r, 0.0]), 1.0);
        }
        for r in [2.0, 2.5, 10.0] {
            assert_eq!(cutoff(&[0.0, r]), 0.0);
        }
        for i in 0..100 {
            let v = cutoff(&[1.0 + i as f64 / 100.0]);
            assert!((0.0..=1.0).contains(&v));
        }
        let x = [1.3, 0.4];
        let mut g = [0.0; 2];
        cutoff_gradient(&x, &mut g);
        let h = 1e-6;
        let fd0 = (cutoff(&[x[0] + h, x[1]]) - cutoff(&[x[0] - h, x[1]])) / (2.0 * h);
        assert!((fd0 - g[0]).abs() < 1e-7);
    }

    #[test]
    fn constants_and_linear_fields_are_reproduced() {
        let p = pair(DriftSpec::Linear { scale: 1.0 }, DiffusionSpec::Tanh { scale: 0.0 }, 2);
        let c = CoefficientPair::new(
            Arc::new(crate::fields::ConstantSigma { rows: 2, cols: 2, values: vec![1.0, 2.0, 3.0, 4.0] }),
            p.drift.clone(),
        )
        .unwrap();
        let n = 4;
        let m = mollify_pair(&c, MollifierSpec::new(n)).unwrap();
        for x in [[0.5, -1.0], [2.0, 1.5], [-2.9, 0.3]] {
            let s = m.sigma_at(&x);
            for (a, b) in s.iter().zip([1.0, 2.0, 3.0, 4.0]) {
                assert!((a - b).abs() < 1e-14);
            }
            let b = m.drift_at(&x);
            assert!((b[0] - x[0]).abs() < 1e-13 && (b[1] - x[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn vseries_level_50_against_fine_oracle() {
        let n = 50.0;
        let x = 0.3;
        let p = pair(DriftSpec::Vseries { terms: 10_000, table_points: None }, DiffusionSpec::Zero, 1);
        let got = mollify_pair(&p, MollifierSpec::new(50)).unwrap().drift_at(&[x])[0];
        // independent route: composite Simpson at 8x the node count against
        // the analytically normalised bump
        let panels = 8 * DEFAULT_QUADRATURE_POINTS;
        let h = 2.0 / panels as f64;
        let c = bump_normalization(1);
        let mut acc = 0.0;
        for i in 0..=panels {
            let y = -1.0 + i as f64 * h;
            let w = if i == 0 || i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * c * raw_bump(y * y) * eval_v_series(x - y / n, 10_000).value;
        }
        let oracle = acc * h / 3.0;
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = pair(DriftSpec::SobolevPower { exponent: 0.9 }, DiffusionSpec::SobolevPower { exponent: 0.9 }, 2);
        let m = mollify_pair(&p, MollifierSpec::new(3)).unwrap();
        for x in [[0.6, -0.9], [3.5, 1.0]] {
            let j = m.drift_jacobian(&x, 1.0);
            let fd = {
                let mut out = vec![0.0; 4];
                let h = 1e-5;
                for c in 0..2 {
                    let (mut xp, mut xm) = (x, x);
                    xp[c] += h;
                    xm[c] -= h;
                    let (bp, bm) = (m.drift_at(&xp), m.drift_at(&xm));
                    for i in 0..2 {
                        out[i * 2 + c] = (bp[i] - bm[i]) / (2.0 * h);
                    }
                }
                out
            };
            for (a, b) in j.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{j:?} vs {fd:?}");
            }
            let mut g = vec![0.0; 8];
            assert!(m.sigma.gradient(&x, &mut g));
            let mut gf = vec![0.0; 8];
            crate::fields::sigma_gradient_fd(m.sigma.as_ref(), &x, 1e-5, &mut gf);
            for (a, b) in g.iter().zip(&gf) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn cutoff_only_mode() {
        let p = pair(DriftSpec::Ou { theta: 1.0 }, DiffusionSpec::Tanh { scale: 1.0 }, 1);
        let m = mollify_pair(&p, MollifierSpec::new(2).with_mode(MollifyMode::CutoffOnly)).unwrap();
        assert_eq!(m.sigma_at(&[0.7])[0], 0.7f64.tanh());
        assert_eq!(m.drift_at(&[5.0])[0], 0.0);
        assert!(m.drift.divergence(&[0.5]).is_some());
    }

    #[test]
    fn zero_level_rejected() {
        let p = pair(DriftSpec::Zero, DiffusionSpec::Zero, 1);
        assert!(matches!(mollify_pair(&p, MollifierSpec::new(0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn distance_examples() {
        let p = pair(DriftSpec::Vseries { terms: 500, table_points: None }, DiffusionSpec::Constant { scale: 0.5 }, 1);
        let s = MollifierSpec::new(8);
        let z = mollification_distance(&p, s, s, 1.0, Norm::L1, 200).unwrap();
        assert_eq!((z.drift, z.sigma), (0.0, 0.0));
        let d = mollification_distance(&p, MollifierSpec::new(10), MollifierSpec::new(20), 1.0, Norm::L1, 400).unwrap();
        assert!(d.sigma.abs() < 1e-12);
        assert!(d.drift > 0.0);
    }

    #[test]
    fn mollified_fields_are_smooth() {
        // central differences at h and h/2 differ by a factor ~4 in error
        let p = pair(DriftSpec::Vseries { terms: 2000, table_points: None }, DiffusionSpec::Zero, 1);
        let m = mollify_pair(&p, MollifierSpec::new(8)).unwrap();
        let x = [0.3];
        let exact = m.drift.divergence(&x).unwrap();
        let e1 = (crate::fields::divergence_fd(m.drift.as_ref(), &x, 0.02) - exact).abs();
        let e2 = (crate::fields::divergence_fd(m.drift.as_ref(), &x, 0.01) - exact).abs();
        assert!(e2 / e1 > 0.15 && e2 / e1 < 0.35, "{e1} {e2}");
    }
}
