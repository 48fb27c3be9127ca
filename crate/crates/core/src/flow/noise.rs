use std::sync::atomic::{AtomicU64, Ordering};

use crate::rng::{NormalBlocks, Purpose};
use crate::{Error, Result};

static NEXT_ROOT: AtomicU64 = AtomicU64::new(1);

/// Uniform grid `t_k = k T / N`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_end * k as f64 / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Brownian increments addressed by `(master_seed, path, step)`.
///
/// Nothing is stored: increment `k` of path `p` is regenerated on demand
/// from the counter-based stream. A coarsened store sums consecutive base
/// increments and keeps the root identity, so flows integrated on a coarse
/// and a fine grid see the same Brownian path.
#[derive(Debug, Clone)]
pub struct BrownianStore {
    root: u64,
    master_seed: u64,
    n_paths: usize,
    dim_m: usize,
    t_end: f64,
    base_steps: usize,
    factor: usize,
}

impl BrownianStore {
    pub fn new(master_seed: u64, n_paths: usize, dim_m: usize, t_end: f64, steps: usize) -> Result<Self> {
        if n_paths == 0 || dim_m == 0 || steps == 0 {
            return Err(Error::param("Brownian store needs paths, noise dimension and steps >= 1"));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::param("horizon T must be positive"));
        }
        Ok(Self {
            root: NEXT_ROOT.fetch_add(1, Ordering::Relaxed),
            master_seed,
            n_paths,
            dim_m,
            t_end,
            base_steps: steps,
            factor: 1,
        })
    }

    /// Same paths on a grid with `factor` times fewer steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::param(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        Ok(Self { factor: self.factor * factor, ..self.clone() })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn steps(&self) -> usize {
        self.base_steps / self.factor
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid { t_end: self.t_end, steps: self.steps() }
    }

    pub fn dt(&self) -> f64 {
        self.grid().dt()
    }

    /// Whether both stores derive from the same root (same Brownian paths).
    pub fn same_root(&self, other: &BrownianStore) -> bool {
        self.root == other.root
    }

    /// Same root and same grid.
    pub fn same_store(&self, other: &BrownianStore) -> bool {
        self.same_root(other) && self.factor == other.factor
    }

    /// Increment of step `step` on path `path`, written into `out` (len m).
    pub fn increment(&self, path: usize, step: usize, out: &mut [f64]) {
        let mut blocks = NormalBlocks::new(self.master_seed, Purpose::Brownian, path as u64, self.dim_m);
        let mut z = vec![0.0; self.dim_m];
        out.fill(0.0);
        blocks.fill((step * self.factor) as u64, &mut z);
        for j in 0..self.factor {
            if j > 0 {
                blocks.fill_next(&mut z);
            }
            for (o, v) in out.iter_mut().zip(&z) {
                *o += v;
            }
        }
        let scale = self.base_dt().sqrt();
        for o in out.iter_mut() {
            *o *= scale;
        }
    }

    /// All increments of one path, `steps * m` values, step-major.
    pub fn path_increments(&self, path: usize) -> Vec<f64> {
        let m = self.dim_m;
        let mut blocks = NormalBlocks::new(self.master_seed, Purpose::Brownian, path as u64, m);
        let mut out = vec![0.0; self.steps() * m];
        let mut z = vec![0.0; m];
        let scale = self.base_dt().sqrt();
        blocks.fill(0, &mut z);
        for k in 0..self.base_steps {
            if k > 0 {
                blocks.fill_next(&mut z);
            }
            let row = &mut out[(k / self.factor) * m..(k / self.factor + 1) * m];
            for (o, v) in row.iter_mut().zip(&z) {
                *o += scale * v;
            }
        }
        out
    }

    fn base_dt(&self) -> f64 {
        self.t_end / self.base_steps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_random_access() {
        let s = BrownianStore::new(11, 3, 2, 1.0, 64).unwrap();
        let t = BrownianStore::new(11, 3, 2, 1.0, 64).unwrap();
        let a = s.path_increments(2);
        assert_eq!(a, t.path_increments(2));
        let mut one = [0.0; 2];
        s.increment(2, 37, &mut one);
        assert_eq!(&one[..], &a[74..76]);
        assert!(!s.same_root(&t));
    }

    #[test]
    fn coarsening_sums_base_increments() {
        let s = BrownianStore::new(5, 1, 1, 2.0, 32).unwrap();
        let c = s.coarsen(4).unwrap();
        assert!(c.same_root(&s) && !c.same_store(&s));
        assert_eq!(c.steps(), 8);
        let (fine, coarse) = (s.path_increments(0), c.path_increments(0));
        for j in 0..8 {
            let sum: f64 = fine[4 * j..4 * j + 4].iter().sum();
            assert!((sum - coarse[j]).abs() < 1e-14);
        }
        let mut one = [0.0];
        c.increment(0, 5, &mut one);
        assert!((one[0] - coarse[5]).abs() < 1e-14);
        assert!(s.coarsen(3).is_err());
    }

    #[test]
    fn increments_have_variance_dt() {
        let s = BrownianStore::new(1, 200, 1, 1.0, 100).unwrap();
        let mut all = Vec::new();
        for p in 0..200 {
            all.extend(s.path_increments(p));
        }
        let n = all.len() as f64;
        let var = all.iter().map(|v| v * v).sum::<f64>() / n;
        // var of the sample second moment: 2 dt^2 / n
        assert!((var - 0.01).abs() < 4.0 * (2.0f64).sqrt() * 0.01 / n.sqrt());
    }
}
