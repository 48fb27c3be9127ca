//! Uniform cell-centred grids on axis-aligned boxes (d <= 3).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Box `[lower, upper]` split into `resolution[i]` cells along axis `i`.
/// Values are stored row-major with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || d > 3 || upper.len() != d || resolution.len() != d {
            return Err(Error::param(format!(
                "grid needs 1..=3 matching axes, got lower {}, upper {}, resolution {}",
                lower.len(),
                upper.len(),
                resolution.len()
            )));
        }
        for i in 0..d {
            if !(upper[i] > lower[i]) || resolution[i] == 0 {
                return Err(Error::param(format!("degenerate grid axis {i}")));
            }
        }
        Ok(Self { lower, upper, resolution })
    }

    /// Cube `[-half, half]^d` with `cells` cells per axis.
    pub fn cube(dim: usize, half: f64, cells: usize) -> Self {
        Self::new(vec![-half; dim], vec![half; dim], vec![cells; dim]).expect("valid cube")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.resolution[axis] as f64
    }

    pub fn steps(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.step(a)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.step(a)).product()
    }

    /// Row-major stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.resolution[axis + 1..].iter().product()
    }

    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.resolution[a];
            flat /= self.resolution[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in 0..self.dim() {
            flat = flat * self.resolution[a] + idx[a];
        }
        flat
    }

    pub fn center_coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 0.5) * self.step(axis)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let idx = self.unravel(flat);
        (0..self.dim()).map(|a| self.center_coord(a, idx[a])).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Cell holding `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for a in 0..self.dim() {
            let t = (x[a] - self.lower[a]) / self.step(a);
            if !(t >= 0.0) || t > self.resolution[a] as f64 {
                return None;
            }
            let i = (t as usize).min(self.resolution[a] - 1);
            flat = flat * self.resolution[a] + i;
        }
        Some(flat)
    }

    /// Same box, `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            resolution: self.resolution.iter().map(|r| r * factor).collect(),
        }
    }
}

/// Scalar values attached to the cells of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        Self { spec, values: vec![0.0; n] }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.center(i))).collect();
        Self { spec, values }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::param(format!(
                "grid has {} cells but {} values were given",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    /// Riemann sum `sum v * cell_volume`.
    pub fn integral(&self) -> f64 {
        crate::stats::pairwise_sum(&self.values) * self.spec.cell_volume()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation between cell centres, clamped at the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.spec.dim();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..d {
            let n = self.spec.resolution[a];
            let t = (x[a] - self.spec.lower[a]) / self.spec.step(a) - 0.5;
            if n == 1 || t <= 0.0 {
                base[a] = 0;
                frac[a] = 0.0;
            } else if t >= (n - 1) as f64 {
                base[a] = n - 2;
                frac[a] = 1.0;
            } else {
                base[a] = t as usize;
                frac[a] = t - base[a] as f64;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                let n = self.spec.resolution[a];
                let i = (base[a] + bit).min(n - 1);
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * n + i;
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ravel_roundtrip() {
        let g = GridSpec::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0], vec![3, 4, 5]).unwrap();
        for flat in 0..g.len() {
            let idx = g.unravel(flat);
            assert_eq!(g.ravel(&idx[..3]), flat);
        }
        assert_eq!(g.stride(0), 20);
        assert_eq!(g.stride(2), 1);
    }

    #[test]
    fn interpolation_is_exact_for_affine() {
        let g = GridSpec::cube(2, 1.0, 10);
        let f = ScalarGrid::from_fn(g, |x| 2.0 * x[0] - 3.0 * x[1] + 1.0);
        let v = f.interpolate(&[0.33, -0.41]);
        assert!((v - (2.0 * 0.33 + 3.0 * 0.41 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn locate_edges() {
        let g = GridSpec::cube(1, 1.0, 4);
        assert_eq!(g.locate(&[-1.0]), Some(0));
        assert_eq!(g.locate(&[1.0]), Some(3));
        assert_eq!(g.locate(&[1.01]), None);
    }
}
