use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use serde::Serialize;

use super::VectorField;
use crate::{Error, Result};

/// Default truncation of the V-series; the tail is below `1 / K`.
pub const DEFAULT_V_TERMS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VSeriesValue {
    pub value: f64,
    /// `sum_{k > K} 1/k^2 < 1/K`.
    pub tail_bound: f64,
}

/// `sum_{k=1}^{K} |sin kt| / k^2`.
///
/// `e^{ikt}` is advanced by complex multiplication and re-anchored with a
/// direct `sin_cos` every 64 terms to bound the rounding drift.
pub fn eval_v_series(t: f64, terms: usize) -> VSeriesValue {
    let t = t.rem_euclid(PI);
    let (s1, c1) = t.sin_cos();
    let (mut s, mut c) = (0.0, 1.0);
    let mut acc = 0.0;
    for k in 1..=terms {
        if k % 64 == 0 {
            (s, c) = (k as f64 * t).sin_cos();
        } else {
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
        }
        let kf = k as f64;
        acc += s.abs() / (kf * kf);
    }
    VSeriesValue { value: acc, tail_bound: if terms == 0 { f64::INFINITY } else { 1.0 / terms as f64 } }
}

/// `b(x) = (V(x_1), ..., V(x_d))`.
///
/// With a table, `V` is read by linear interpolation on `[0, pi/2]` using
/// that it is even and `pi`-periodic.
#[derive(Debug, Clone)]
pub struct VSeriesDrift {
    dim: usize,
    terms: usize,
    table: Option<Arc<Vec<f64>>>,
}

impl VSeriesDrift {
    pub fn new(dim: usize, terms: usize) -> Self {
        Self { dim, terms, table: None }
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn with_table(mut self, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::param("V-series table needs at least two points"));
        }
        let h = FRAC_PI_2 / (points - 1) as f64;
        let values = (0..points).map(|i| eval_v_series(i as f64 * h, self.terms).value).collect();
        self.table = Some(Arc::new(values));
        Ok(self)
    }

    #[inline]
    pub fn v(&self, t: f64) -> f64 {
        match &self.table {
            None => eval_v_series(t, self.terms).value,
            Some(table) => {
                let mut r = t.rem_euclid(PI);
                if r > FRAC_PI_2 {
                    r = PI - r;
                }
                let n = table.len() - 1;
                let u = r / FRAC_PI_2 * n as f64;
                let i = (u as usize).min(n - 1);
                let f = u - i as f64;
                table[i] + f * (table[i + 1] - table[i])
            }
        }
    }
}

impl VectorField for VSeriesDrift {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(x) {
            *o = self.v(t);
        }
    }

    fn name(&self) -> String {
        format!("vseries(K={})", self.terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_at_multiples_of_pi() {
        for terms in [1, 10, 10_000] {
            assert_eq!(eval_v_series(0.0, terms).value, 0.0);
            assert!(eval_v_series(PI, terms).value.abs() < 1e-12);
        }
    }

    #[test]
    fn half_pi_partial_sum() {
        // sum over odd k of 1/k^2 = pi^2/8, oracle: direct partial sum
        let k = 1_000_000;
        let oracle: f64 = (1..=k).step_by(2).map(|j| 1.0 / (j as f64 * j as f64)).sum();
        let got = eval_v_series(FRAC_PI_2, k);
        assert!((got.value - oracle).abs() < 1e-9);
        assert!((got.value - PI * PI / 8.0).abs() < got.tail_bound);
        assert!((PI * PI / 8.0 - 1.233_700_550_136_169_7).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_summation() {
        for t in [0.1, 0.77, 2.0, -3.3, 40.0] {
            let direct: f64 = (1..=5000).map(|k| ((k as f64) * t).sin().abs() / (k as f64).powi(2)).sum();
            assert!((eval_v_series(t, 5000).value - direct).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn bounded_by_basel() {
        for i in 0..500 {
            let t = -10.0 + 0.04 * i as f64;
            let v = eval_v_series(t, 2000).value;
            assert!((0.0..=PI * PI / 6.0).contains(&v));
        }
    }

    #[test]
    fn table_is_close_to_series() {
        let exact = VSeriesDrift::new(1, 2000);
        let table = VSeriesDrift::new(1, 2000).with_table(1 << 14).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let t = -7.0 + 0.0137 * i as f64;
            worst = worst.max((exact.v(t) - table.v(t)).abs());
        }
        assert!(worst < 2e-3, "{worst}");
    }
}
