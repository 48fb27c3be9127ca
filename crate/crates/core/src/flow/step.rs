use serde::{Deserialize, Serialize};

use crate::fields::CoefficientPair;

/// States beyond this norm count as overflow.
pub const OVERFLOW_NORM: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    /// Milstein correction, only for `d = m = 1`.
    Milstein1d,
}

/// One explicit step with preallocated scratch space.
pub(crate) struct Stepper<'a> {
    pair: &'a CoefficientPair,
    scheme: Scheme,
    d: usize,
    m: usize,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(pair: &'a CoefficientPair, scheme: Scheme) -> Self {
        let (d, m) = (pair.dim(), pair.noise_dim());
        Self { pair, scheme, d, m, drift: vec![0.0; d], sigma: vec![0.0; d * m], grad: vec![0.0; d * d * m] }
    }

    /// Advances `x` in place by `dt` with Brownian increment `db`.
    /// Returns false when the new state is not finite or overflows; `x` is
    /// then left unchanged.
    #[inline]
    pub fn step(&mut self, x: &mut [f64], db: &[f64], dt: f64) -> bool {
        let (d, m) = (self.d, self.m);
        self.pair.drift.eval(x, &mut self.drift);
        self.pair.sigma.eval(x, &mut self.sigma);
        let mut next = [0.0; 8];
        let mut big = Vec::new();
        let y: &mut [f64] = if d <= 8 {
            &mut next[..d]
        } else {
            big.resize(d, 0.0);
            &mut big
        };
        for i in 0..d {
            let mut acc = x[i] + self.drift[i] * dt;
            for k in 0..m {
                acc += self.sigma[i * m + k] * db[k];
            }
            y[i] = acc;
        }
        if self.scheme == Scheme::Milstein1d {
            if !self.pair.sigma.gradient(x, &mut self.grad) {
                crate::fields::sigma_gradient_fd(self.pair.sigma.as_ref(), x, crate::fields::FD_STEP, &mut self.grad);
            }
            y[0] += 0.5 * self.sigma[0] * self.grad[0] * (db[0] * db[0] - dt);
        }
        let norm2: f64 = y.iter().map(|v| v * v).sum();
        if !(norm2.is_finite() && norm2 < OVERFLOW_NORM * OVERFLOW_NORM) {
            return false;
        }
        x.copy_from_slice(y);
        true
    }
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
