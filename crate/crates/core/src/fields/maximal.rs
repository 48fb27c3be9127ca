use rayon::prelude::*;

use crate::grid::ScalarGrid;
use crate::{Error, Result};

/// Log-spaced radii `h (R/h)^{i/count}`, `i = 1..=count`, with `h` the
/// smallest grid step.
pub fn ball_radii(min_step: f64, radius: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|i| min_step * (radius / min_step).powf(i as f64 / count as f64))
        .collect()
}

/// Discrete local maximal function
/// `M_R f(x) = max_r (average of f over grid cells within distance r of x)`
/// over the radii of [`ball_radii`]. Balls are truncated at the grid edge.
///
/// Offsets are sorted by distance once; each cell then accumulates its
/// ball sums incrementally while sweeping the radii.
pub fn local_maximal_function(f: &ScalarGrid, radius: f64, radii_count: usize) -> Result<ScalarGrid> {
    let spec = &f.spec;
    let d = spec.dim();
    let steps = spec.steps();
    let half_extent = (0..d)
        .map(|a| 0.5 * (spec.upper[a] - spec.lower[a]))
        .fold(f64::INFINITY, f64::min);
    if !(radius > 0.0) || radius > half_extent {
        return Err(Error::domain(format!(
            "maximal-function radius {radius} must lie in (0, {half_extent}]"
        )));
    }
    if radii_count == 0 {
        return Err(Error::param("radii_count must be positive"));
    }
    if let Some(v) = f.values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::domain(format!("maximal function needs f >= 0, found {v}")));
    }
    let min_step = steps.iter().cloned().fold(f64::INFINITY, f64::min);
    if radius <= min_step {
        return Err(Error::domain(format!("radius {radius} does not exceed the grid step {min_step}")));
    }
    let radii = ball_radii(min_step, radius, radii_count);
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();

    let reach: Vec<i64> = steps.iter().map(|h| (radius / h).floor() as i64).collect();
    let mut offsets: Vec<([i64; 3], f64)> = Vec::new();
    let mut idx = [0i64; 3];
    let span = |a: usize| -> i64 { if a < d { 2 * reach[a] + 1 } else { 1 } };
    for i0 in 0..span(0) {
        for i1 in 0..span(1) {
            for i2 in 0..span(2) {
                idx[0] = i0 - if d > 0 { reach[0] } else { 0 };
                idx[1] = i1 - if d > 1 { reach[1] } else { 0 };
                idx[2] = i2 - if d > 2 { reach[2] } else { 0 };
                let dist2 = offset_dist2(&idx, &steps);
                if dist2 <= r2[r2.len() - 1] {
                    offsets.push((idx, dist2));
                }
            }
        }
    }
    offsets.sort_by(|a, b| a.1.total_cmp(&b.1));

    let res: Vec<i64> = spec.resolution.iter().map(|&r| r as i64).collect();
    let strides: Vec<i64> = (0..d).map(|a| spec.stride(a) as i64).collect();
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|flat| {
            let here = spec.unravel(flat);
            let (mut sum, mut count) = (0.0, 0usize);
            let mut best = f64::NEG_INFINITY;
            let mut next = 0;
            for &rr in &r2 {
                while next < offsets.len() && offsets[next].1 <= rr {
                    let (off, _) = offsets[next];
                    next += 1;
                    let mut lin = 0i64;
                    let mut inside = true;
                    for a in 0..d {
                        let j = here[a] as i64 + off[a];
                        if j < 0 || j >= res[a] {
                            inside = false;
                            break;
                        }
                        lin += j * strides[a];
                    }
                    if inside {
                        sum += f.values[lin as usize];
                        count += 1;
                    }
                }
                if count > 0 {
                    best = best.max(sum / count as f64);
                }
            }
            best
        })
        .collect();
    ScalarGrid::from_values(spec.clone(), values)
}

#[inline]
pub(crate) fn offset_dist2(off: &[i64], steps: &[f64]) -> f64 {
    steps.iter().enumerate().map(|(a, h)| {
        let v = off[a] as f64 * h;
        v * v
    }).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};

    /// Exhaustive oracle: for every cell and every radius, scan the whole
    /// grid and average the cells inside the ball.
    fn brute_force(f: &ScalarGrid, radius: f64, count: usize) -> Vec<f64> {
        let spec = &f.spec;
        let d = spec.dim();
        let steps = spec.steps();
        let min_step = steps.iter().cloned().fold(f64::INFINITY, f64::min);
        let radii = ball_radii(min_step, radius, count);
        (0..spec.len())
            .map(|c| {
                let ci = spec.unravel(c);
                radii
                    .iter()
                    .map(|r| {
                        let (mut s, mut n) = (0.0, 0);
                        for o in 0..spec.len() {
                            let oi = spec.unravel(o);
                            let off: Vec<i64> = (0..d).map(|a| oi[a] as i64 - ci[a] as i64).collect();
                            if offset_dist2(&off, &steps) <= r * r {
                                s += f.values[o];
                                n += 1;
                            }
                        }
                        s / n as f64
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    fn random_grid(spec: GridSpec, rng: &mut impl Rng, scale: f64) -> ScalarGrid {
        let values = (0..spec.len()).map(|_| scale * rng.gen::<f64>()).collect();
        ScalarGrid::from_values(spec, values).unwrap()
    }

    #[test]
    fn constant_field_is_fixed() {
        let f = ScalarGrid::from_fn(GridSpec::cube(2, 1.0, 16), |_| 2.5);
        let m = local_maximal_function(&f, 0.5, 8).unwrap();
        assert!(m.values.iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn indicator_of_ball_at_centre() {
        let spec = GridSpec::cube(2, 1.0, 33);
        let f = ScalarGrid::from_fn(spec.clone(), |x| if x[0].hypot(x[1]) <= 0.5 { 1.0 } else { 0.0 });
        let m = local_maximal_function(&f, 0.4, 12).unwrap();
        let centre = spec.locate(&[0.0, 0.0]).unwrap();
        assert_eq!(m.values[centre], 1.0);
    }

    #[test]
    fn matches_exhaustive_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let spec = GridSpec::cube(2, 1.0, 12);
        let f = random_grid(spec, &mut rng, 1.0);
        let fast = local_maximal_function(&f, 0.6, 6).unwrap();
        let slow = brute_force(&f, 0.6, 6);
        for (a, b) in fast.values.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_dimensional_and_errors() {
        let f = ScalarGrid::from_fn(GridSpec::cube(1, 1.0, 40), |x| x[0].abs());
        let m = local_maximal_function(&f, 0.5, 4).unwrap();
        let slow = brute_force(&f, 0.5, 4);
        for (a, b) in m.values.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(matches!(local_maximal_function(&f, 1.5, 4), Err(Error::Domain(_))));
        let neg = ScalarGrid::from_fn(GridSpec::cube(1, 1.0, 40), |x| x[0]);
        assert!(matches!(local_maximal_function(&neg, 0.5, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn sublinear() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let spec = GridSpec::cube(2, 1.0, 16);
        let f = random_grid(spec.clone(), &mut rng, 1.0);
        let g = random_grid(spec.clone(), &mut rng, 3.0);
        let sum = ScalarGrid::from_values(spec, f.values.iter().zip(&g.values).map(|(a, b)| a + b).collect()).unwrap();
        let (mf, mg, ms) = (
            local_maximal_function(&f, 0.5, 8).unwrap(),
            local_maximal_function(&g, 0.5, 8).unwrap(),
            local_maximal_function(&sum, 0.5, 8).unwrap(),
        );
        for i in 0..ms.values.len() {
            assert!(ms.values[i] <= mf.values[i] + mg.values[i] + 1e-12);
        }
    }
}
