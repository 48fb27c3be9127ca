//! Assembly of the generator `L` in non-divergence form and of `L*` in flux
//! form, each from its own stencil.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::Csr;
use crate::fields::CoefficientPair;
use crate::grid::{GridSpec, ScalarGrid};
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// Cell Peclet number `|b^i| h / (a^{ii} / 2)` above which the drift is
/// upwinded.
pub const PECLET_SWITCH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// `u = 0` outside the box; mass leaks through the boundary.
    Dirichlet0,
    /// No flux through the boundary faces; mass is conserved.
    ZeroFlux,
}

/// Coefficients `a = sigma sigma^T` and `b` sampled at cell centres together
/// with the assembled operators.
#[derive(Debug, Clone)]
pub struct GeneratorGrid {
    spec: GridSpec,
    boundary: Boundary,
    a: Vec<f64>,
    b: Vec<f64>,
    upwind: Vec<bool>,
    l: Csr,
    l_star: Csr,
}

impl GeneratorGrid {
    pub fn new(pair: &CoefficientPair, spec: GridSpec, boundary: Boundary) -> Result<Self> {
        let d = pair.dim();
        if spec.dim() != d {
            return Err(Error::param(format!("grid is {}-d but the coefficients live in R^{d}", spec.dim())));
        }
        let cells: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let x = spec.center(k);
                (pair.diffusion_matrix(&x), pair.drift_at(&x))
            })
            .collect();
        let mut a = Vec::with_capacity(spec.len() * d * d);
        let mut b = Vec::with_capacity(spec.len() * d);
        for (ak, bk) in cells {
            a.extend(ak);
            b.extend(bk);
        }
        Self::from_coefficients(spec, a, b, boundary)
    }

    /// `a` is `cells x d x d` row-major, `b` is `cells x d`.
    pub fn from_coefficients(spec: GridSpec, a: Vec<f64>, b: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let (d, n) = (spec.dim(), spec.len());
        if a.len() != n * d * d || b.len() != n * d {
            return Err(Error::param("coefficient arrays do not match the grid"));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite coefficient on the grid".into()));
        }
        for k in 0..n {
            check_psd(&a[k * d * d..(k + 1) * d * d], d)
                .map_err(|m| Error::domain(format!("a at cell {k}: {m}")))?;
        }
        let steps = spec.steps();
        let upwind: Vec<bool> = (0..n * d)
            .map(|e| {
                let (k, i) = (e / d, e % d);
                let bi = b[k * d + i].abs();
                bi > 0.0 && bi * steps[i] > 0.5 * PECLET_SWITCH * a[k * d * d + i * d + i]
            })
            .collect();
        let mut g = Self { spec, boundary, a, b, upwind, l: Csr::from_rows(vec![]), l_star: Csr::from_rows(vec![]) };
        let l_rows: Vec<_> = (0..n).into_par_iter().map(|k| g.l_row(k)).collect();
        let s_rows: Vec<_> = (0..n).into_par_iter().map(|k| g.l_star_row(k)).collect();
        g.l = Csr::from_rows(l_rows);
        g.l_star = Csr::from_rows(s_rows);
        Ok(g)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn diffusion(&self, cell: usize) -> &[f64] {
        let d = self.dim();
        &self.a[cell * d * d..(cell + 1) * d * d]
    }

    pub fn drift(&self, cell: usize) -> &[f64] {
        let d = self.dim();
        &self.b[cell * d..(cell + 1) * d]
    }

    /// Whether the drift along `axis` is upwinded in `cell`.
    pub fn is_upwind(&self, cell: usize, axis: usize) -> bool {
        self.upwind[cell * self.dim() + axis]
    }

    /// Number of (cell, axis) pairs using the upwind drift stencil.
    pub fn upwind_count(&self) -> usize {
        self.upwind.iter().filter(|u| **u).count()
    }

    pub fn generator_matrix(&self) -> &Csr {
        &self.l
    }

    pub fn adjoint_matrix(&self) -> &Csr {
        &self.l_star
    }

    pub fn max_diffusion(&self) -> f64 {
        let d = self.dim();
        (0..self.spec.len())
            .flat_map(|k| (0..d).map(move |i| (k, i)))
            .fold(0.0f64, |m, (k, i)| m.max(self.a[k * d * d + i * d + i]))
    }

    pub fn max_drift(&self) -> f64 {
        self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest stable explicit Euler step.
    pub fn explicit_dt_limit(&self) -> f64 {
        let h = self.spec.steps().into_iter().fold(f64::INFINITY, f64::min);
        let d = self.dim() as f64;
        let diff = self.max_diffusion();
        let drift = self.max_drift();
        let mut lim = f64::INFINITY;
        if diff > 0.0 {
            lim = lim.min(h * h / (2.0 * d * diff));
        }
        if drift > 0.0 {
            lim = lim.min(h / drift);
        }
        lim
    }

    /// `<f, g> = sum f g h^d`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        super::sparse::dot(f, g) * self.spec.cell_volume()
    }

    /// `L phi` with central differences; warns when `phi` touches the
    /// boundary ring.
    pub fn apply_l(&self, phi: &ScalarGrid) -> Result<ScalarGrid> {
        self.check_grid(phi)?;
        let ring = self.boundary_ring_max(&phi.values);
        if ring > 0.0 {
            log::warn!("apply_L: test function reaches the boundary ring (max |phi| = {ring:e})");
        }
        let mut out = vec![0.0; self.spec.len()];
        self.l.matvec(&phi.values, &mut out);
        Ok(ScalarGrid { spec: self.spec.clone(), values: out })
    }

    /// `L* u` in flux form.
    pub fn apply_adjoint(&self, u: &ScalarGrid) -> Result<ScalarGrid> {
        self.check_grid(u)?;
        let mut out = vec![0.0; self.spec.len()];
        self.l_star.matvec(&u.values, &mut out);
        Ok(ScalarGrid { spec: self.spec.clone(), values: out })
    }

    /// `sum u h^d`.
    pub fn mass(&self, u: &[f64]) -> f64 {
        pairwise_sum(u) * self.spec.cell_volume()
    }

    fn check_grid(&self, f: &ScalarGrid) -> Result<()> {
        if f.spec != self.spec {
            return Err(Error::param("field lives on a different grid than the generator"));
        }
        Ok(())
    }

    fn boundary_ring_max(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        (0..self.spec.len())
            .filter(|&k| {
                let idx = self.spec.unravel(k);
                (0..d).any(|a| idx[a] == 0 || idx[a] + 1 == self.spec.resolution[a])
            })
            .fold(0.0f64, |m, k| m.max(v[k].abs()))
    }

    /// Neighbour of `k` at `off` cells along `axis`, `None` outside the box.
    fn neighbour(&self, k: usize, idx: &[usize; 3], axis: usize, off: isize) -> Option<usize> {
        self.in_range(idx, axis, off)
            .then(|| (k as isize + off * self.spec.stride(axis) as isize) as usize)
    }

    fn in_range(&self, idx: &[usize; 3], axis: usize, off: isize) -> bool {
        let j = idx[axis] as isize + off;
        j >= 0 && j < self.spec.resolution[axis] as isize
    }

    /// Row `k` of `L`: ghost values copy the boundary cell under zero flux
    /// and vanish under Dirichlet.
    fn l_row(&self, k: usize) -> Vec<(usize, f64)> {
        let d = self.dim();
        let h = self.spec.steps();
        let idx = self.spec.unravel(k);
        let a = self.diffusion(k);
        let b = self.drift(k);
        let mut row = Vec::with_capacity(1 + 4 * d + 4 * d * (d - 1) / 2);
        let push = |row: &mut Vec<(usize, f64)>, axis: usize, off: isize, c: f64| match self.neighbour(k, &idx, axis, off)
        {
            Some(j) => row.push((j, c)),
            None if self.boundary == Boundary::ZeroFlux => row.push((k, c)),
            None => {}
        };
        for i in 0..d {
            let c = 0.5 * a[i * d + i] / (h[i] * h[i]);
            push(&mut row, i, 1, c);
            push(&mut row, i, -1, c);
            row.push((k, -2.0 * c));
            if self.is_upwind(k, i) {
                let (bp, bm) = (b[i].max(0.0), (-b[i]).max(0.0));
                push(&mut row, i, 1, bp / h[i]);
                push(&mut row, i, -1, bm / h[i]);
                row.push((k, -(bp + bm) / h[i]));
            } else {
                push(&mut row, i, 1, 0.5 * b[i] / h[i]);
                push(&mut row, i, -1, -0.5 * b[i] / h[i]);
            }
        }
        for i in 0..d {
            for j in i + 1..d {
                let c = a[i * d + j] / (4.0 * h[i] * h[j]);
                if c == 0.0 {
                    continue;
                }
                for (si, sj) in [(1isize, 1isize), (1, -1), (-1, 1), (-1, -1)] {
                    let mut target = k as isize;
                    let mut keep = true;
                    for (axis, s) in [(i, si), (j, sj)] {
                        if self.in_range(&idx, axis, s) {
                            target += s * self.spec.stride(axis) as isize;
                        } else if self.boundary == Boundary::Dirichlet0 {
                            keep = false;
                        }
                    }
                    if keep {
                        row.push((target as usize, (si * sj) as f64 * c));
                    }
                }
            }
        }
        row
    }

    /// Drift flux carried by cell `c` through its right and left faces.
    fn face_fluxes(&self, c: usize, axis: usize) -> (f64, f64) {
        let bi = self.b[c * self.dim() + axis];
        if self.is_upwind(c, axis) {
            (bi.max(0.0), -(-bi).max(0.0))
        } else {
            (0.5 * bi, 0.5 * bi)
        }
    }

    /// Row `k` of `L* u = 1/2 d_ij (a^{ij} u) - d_i (b^i u)` as differences
    /// of face fluxes; boundary faces carry no flux under zero flux.
    fn l_star_row(&self, k: usize) -> Vec<(usize, f64)> {
        let d = self.dim();
        let dd = d * d;
        let h = self.spec.steps();
        let idx = self.spec.unravel(k);
        let zero_flux = self.boundary == Boundary::ZeroFlux;
        let mut row = Vec::with_capacity(1 + 4 * d + 4 * d * (d - 1) / 2);
        for i in 0..d {
            let h2 = h[i] * h[i];
            let akk = self.a[k * dd + i * d + i];
            row.push((k, -akk / h2));
            for off in [1isize, -1] {
                match self.neighbour(k, &idx, i, off) {
                    Some(j) => row.push((j, 0.5 * self.a[j * dd + i * d + i] / h2)),
                    None if zero_flux => row.push((k, 0.5 * akk / h2)),
                    None => {}
                }
            }
            // -(F_{k+1/2} - F_{k-1/2}) / h with F_{c+1/2} = r_c u_c + l_{c+1} u_{c+1}.
            let (r_k, l_k) = self.face_fluxes(k, i);
            match self.neighbour(k, &idx, i, 1) {
                Some(j) => {
                    let (_, l_j) = self.face_fluxes(j, i);
                    row.push((k, -r_k / h[i]));
                    row.push((j, -l_j / h[i]));
                }
                None if zero_flux => {}
                None => row.push((k, -r_k / h[i])),
            }
            match self.neighbour(k, &idx, i, -1) {
                Some(j) => {
                    let (r_j, _) = self.face_fluxes(j, i);
                    row.push((j, r_j / h[i]));
                    row.push((k, l_k / h[i]));
                }
                None if zero_flux => {}
                None => row.push((k, l_k / h[i])),
            }
        }
        // d_j d_i (a^{ij} u) with conservative central differences; a ghost
        // beyond a zero-flux face mirrors the boundary cell with opposite sign.
        for i in 0..d {
            for j in i + 1..d {
                let c = 1.0 / (4.0 * h[i] * h[j]);
                for (si, sj) in [(1isize, 1isize), (1, -1), (-1, 1), (-1, -1)] {
                    let mut target = k as isize;
                    let mut sign = (si * sj) as f64;
                    let mut keep = true;
                    for (axis, s) in [(i, si), (j, sj)] {
                        if self.in_range(&idx, axis, s) {
                            target += s * self.spec.stride(axis) as isize;
                        } else if zero_flux {
                            sign = -sign;
                        } else {
                            keep = false;
                        }
                    }
                    if keep {
                        let t = target as usize;
                        let aij = self.a[t * dd + i * d + j];
                        if aij != 0.0 {
                            row.push((t, sign * c * aij));
                        }
                    }
                }
            }
        }
        row
    }
}

/// Principal minors of a symmetric `d x d` matrix are nonnegative.
fn check_psd(a: &[f64], d: usize) -> std::result::Result<(), String> {
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0f64, f64::max).max(1e-300);
    let tol = 1e-10 * scale;
    for i in 0..d {
        for j in 0..i {
            if (a[i * d + j] - a[j * d + i]).abs() > tol {
                return Err("not symmetric".into());
            }
        }
        if a[i * d + i] < -tol {
            return Err("negative diagonal".into());
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            if a[i * d + i] * a[j * d + j] - a[i * d + j] * a[i * d + j] < -tol * scale {
                return Err("not positive semidefinite".into());
            }
        }
    }
    if d == 3 {
        let m = |r: usize, c: usize| a[r * 3 + c];
        let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
            + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
        if det < -tol * scale * scale {
            return Err("not positive semidefinite".into());
        }
    }
    Ok(())
}
