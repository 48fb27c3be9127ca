//! Compressed sparse rows and a Jacobi-preconditioned BiCGSTAB with a fixed
//! summation order.

use rayon::prelude::*;

use crate::stats::pairwise_sum;
use crate::{Error, Result};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Rows given as `(col, value)` lists; duplicate columns are merged.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (c, v) in row {
                if c == last {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = c;
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (r, o) in chunk.iter_mut().enumerate() {
                let row = base + r;
                let mut acc = 0.0;
                for e in self.row_ptr[row]..self.row_ptr[row + 1] {
                    acc += self.vals[e] * x[self.cols[e]];
                }
                *o = acc;
            }
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .find(|&e| self.cols[e] == r)
                    .map_or(0.0, |e| self.vals[e])
            })
            .collect()
    }

    /// `alpha * I + beta * self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        let mut rows = Vec::with_capacity(self.n);
        for r in 0..self.n {
            let mut row: Vec<(usize, f64)> =
                (self.row_ptr[r]..self.row_ptr[r + 1]).map(|e| (self.cols[e], beta * self.vals[e])).collect();
            row.push((r, alpha));
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for r in 0..self.n {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                rows[self.cols[e]].push((r, self.vals[e]));
            }
        }
        Self::from_rows(rows)
    }
}

/// Dot product whose rounding does not depend on the thread count.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| pairwise_sum(&x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>()))
        .collect();
    pairwise_sum(&partial)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

const MAX_RESTARTS: usize = 20;

/// Solves `m x = rhs` starting from `x`; converged when
/// `|r| <= tol * |rhs|`.
pub fn bicgstab(m: &Csr, rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = m.n;
    let inv_diag: Vec<f64> = m.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = inv_diag[i] * v[i];
        }
    };
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64]| {
        m.matvec(x, r);
        for i in 0..n {
            r[i] = rhs[i] - r[i];
        }
    };
    residual(x, &mut r);
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt();
    let mut restarts = 0;
    for it in 0..max_iter {
        if res <= tol * bnorm {
            return Ok(SolveStats { iterations: it, residual: res / bnorm });
        }
        let rho_new = dot(&r_hat, &r);
        let denom = if rho_new != 0.0 && rho_new.is_finite() && omega != 0.0 {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond(&p, &mut p_hat);
            m.matvec(&p_hat, &mut v);
            dot(&r_hat, &v)
        } else {
            0.0
        };
        if denom == 0.0 || !denom.is_finite() {
            // restart from the true residual with a fresh shadow vector
            restarts += 1;
            if restarts > MAX_RESTARTS {
                return Err(Error::Numeric(format!("BiCGSTAB breakdown at iteration {it}")));
            }
            residual(x, &mut r);
            r_hat.copy_from_slice(&r);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            res = dot(&r, &r).sqrt();
            continue;
        }
        rho = rho_new;
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = dot(&s, &s).sqrt();
        if snorm <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(SolveStats { iterations: it + 1, residual: snorm / bnorm });
        }
        precond(&s, &mut s_hat);
        m.matvec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = dot(&r, &r).sqrt();
    }
    if res <= tol * bnorm {
        return Ok(SolveStats { iterations: max_iter, residual: res / bnorm });
    }
    Err(Error::Numeric(format!(
        "BiCGSTAB did not converge in {max_iter} iterations (relative residual {:e})",
        res / bnorm
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_and_solve() {
        let rows = vec![
            vec![(0, 4.0), (1, -1.0)],
            vec![(0, -2.0), (1, 4.0), (2, -1.0), (1, 0.5)],
            vec![(1, -1.0), (2, 3.0)],
        ];
        let a = Csr::from_rows(rows);
        assert_eq!(a.nnz(), 7);
        let at = a.transpose();
        assert_eq!(at.transpose(), a);
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        a.matvec(&x_true, &mut b);
        let mut x = [0.0; 3];
        let st = bicgstab(&a, &b, &mut x, 1e-14, 50).unwrap();
        assert!(st.iterations <= 10);
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }
}
