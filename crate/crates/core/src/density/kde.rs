use crate::grid::GridSpec;
use crate::{Error, Result};

/// Kernels are cut at this many bandwidths.
const KERNEL_CUT: f64 = 4.0;

/// Silverman's rule per axis with the Kish effective sample size.
pub fn silverman_bandwidth(points: &[f64], weights: &[f64], dim: usize) -> Vec<f64> {
    let wsum: f64 = weights.iter().sum();
    let n_eff = wsum * wsum / weights.iter().map(|w| w * w).sum::<f64>();
    let factor = (4.0 / ((dim as f64 + 2.0) * n_eff)).powf(1.0 / (dim as f64 + 4.0));
    (0..dim)
        .map(|a| {
            let mean: f64 = points.chunks(dim).zip(weights).map(|(p, w)| w * p[a]).sum::<f64>() / wsum;
            let var: f64 =
                points.chunks(dim).zip(weights).map(|(p, w)| w * (p[a] - mean).powi(2)).sum::<f64>() / wsum;
            factor * var.sqrt()
        })
        .collect()
}

/// Weighted points linearly binned onto the cell centres of `grid`.
/// Returns per-cell mass and the mass of points outside the box.
pub fn linear_binning(points: &[f64], weights: &[f64], grid: &GridSpec) -> (Vec<f64>, f64) {
    let d = grid.dim();
    let mut mass = vec![0.0; grid.len()];
    let mut leaked = 0.0;
    let steps = grid.steps();
    for (p, &w) in points.chunks(d).zip(weights) {
        if !grid.contains(p) {
            leaked += w;
            continue;
        }
        let mut lo = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..d {
            let n = grid.resolution[a];
            let t = (p[a] - grid.lower[a]) / steps[a] - 0.5;
            if t <= 0.0 {
                (lo[a], frac[a]) = (0, 0.0);
            } else if t >= (n - 1) as f64 {
                (lo[a], frac[a]) = (n - 1, 0.0);
            } else {
                lo[a] = t as usize;
                frac[a] = t - lo[a] as f64;
            }
        }
        for corner in 0..(1usize << d) {
            let mut idx = [0usize; 3];
            let mut wc = w;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    if frac[a] == 0.0 {
                        wc = 0.0;
                        break;
                    }
                    idx[a] = lo[a] + 1;
                    wc *= frac[a];
                } else {
                    idx[a] = lo[a];
                    wc *= 1.0 - frac[a];
                }
            }
            if wc != 0.0 {
                mass[grid.ravel(&idx[..d])] += wc;
            }
        }
    }
    (mass, leaked)
}

fn taps(bandwidth: f64, step: f64) -> Vec<f64> {
    let half = (KERNEL_CUT * bandwidth / step).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|j| {
            let x = (j as f64 - half as f64) * step / bandwidth;
            (-0.5 * x * x).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= s;
    }
    k
}

/// Separable discrete Gaussian smoothing of cell masses; mass pushed past
/// the grid edge is dropped and returned.
pub fn smooth_masses(mass: &[f64], grid: &GridSpec, bandwidth: &[f64]) -> (Vec<f64>, f64) {
    let d = grid.dim();
    let before: f64 = mass.iter().sum();
    let mut cur = mass.to_vec();
    for a in 0..d {
        let k = taps(bandwidth[a], grid.step(a));
        let half = (k.len() / 2) as isize;
        let n = grid.resolution[a] as isize;
        let stride = grid.stride(a);
        let mut next = vec![0.0; cur.len()];
        for (flat, &v) in cur.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let i = ((flat / stride) % n as usize) as isize;
            let base = flat - i as usize * stride;
            for (j, kj) in k.iter().enumerate() {
                let t = i + j as isize - half;
                if t >= 0 && t < n {
                    next[base + t as usize * stride] += v * kj;
                }
            }
        }
        cur = next;
    }
    let after: f64 = cur.iter().sum();
    (cur, (before - after).max(0.0))
}

/// Gaussian KDE on the cell centres: density values and leaked mass.
pub fn kde(points: &[f64], weights: &[f64], grid: &GridSpec, bandwidth: &[f64]) -> Result<(Vec<f64>, f64)> {
    if weights.is_empty() {
        return Err(Error::param("KDE of an empty sample"));
    }
    if bandwidth.len() != grid.dim() || bandwidth.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::param("bandwidth must be positive on every axis"));
    }
    let (mass, leak_a) = linear_binning(points, weights, grid);
    let (smooth, leak_b) = smooth_masses(&mass, grid, bandwidth);
    let vol = grid.cell_volume();
    Ok((smooth.into_iter().map(|m| m / vol).collect(), leak_a + leak_b))
}

/// Highest-mass cells that together hold `fraction` of the total mass.
pub fn central_region(mass: &[f64], fraction: f64) -> Vec<bool> {
    let total: f64 = mass.iter().sum();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    let mut keep = vec![false; mass.len()];
    let mut acc = 0.0;
    for i in order {
        if acc >= fraction * total {
            break;
        }
        keep[i] = true;
        acc += mass[i];
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{NormalBlocks, Purpose};

    #[test]
    fn binning_conserves_mass_and_first_moment() {
        let g = GridSpec::cube(2, 1.0, 10);
        let pts = [0.13, -0.42, 0.95, 0.99, -0.5, 0.0, 1.5, 0.0];
        let w = [0.25; 4];
        let (m, leak) = linear_binning(&pts, &w, &g);
        assert!((leak - 0.25).abs() < 1e-15);
        assert!((m.iter().sum::<f64>() - 0.75).abs() < 1e-15);
        // interior points keep their mean under linear binning
        let (m1, _) = linear_binning(&pts[..2], &w[..1], &g);
        let mx: f64 = m1.iter().enumerate().map(|(i, v)| v * g.center(i)[0]).sum();
        assert!((mx / 0.25 - 0.13).abs() < 1e-14);
    }

    #[test]
    fn smoothing_keeps_interior_mass() {
        let g = GridSpec::cube(1, 5.0, 100);
        let mut m = vec![0.0; 100];
        m[50] = 1.0;
        let (s, leak) = smooth_masses(&m, &g, &[0.3]);
        assert!(leak < 1e-15);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let mut e = vec![0.0; 100];
        e[0] = 1.0;
        let (_, leak) = smooth_masses(&e, &g, &[0.3]);
        assert!(leak > 0.4 && leak < 0.6);
    }

    #[test]
    fn gaussian_sample_recovers_density() {
        let n = 200_000;
        let mut z = vec![0.0; n];
        NormalBlocks::new(1, Purpose::Misc, 0, n).fill(0, &mut z);
        let g = GridSpec::cube(1, 5.0, 200);
        let h = silverman_bandwidth(&z, &vec![1.0; n], 1);
        assert!((h[0] - 1.06 * (n as f64).powf(-0.2)).abs() < 0.01);
        let (dens, leak) = kde(&z, &vec![1.0 / n as f64; n], &g, &h).unwrap();
        assert!(leak < 1e-5);
        for (i, v) in dens.iter().enumerate() {
            let x = g.center(i)[0];
            if x.abs() < 2.0 {
                let exact = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                assert!((v - exact).abs() < 0.03 * exact + 0.005, "x={x}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn central_region_takes_the_peak() {
        let m = [0.05, 0.1, 0.45, 0.3, 0.05, 0.05];
        assert_eq!(central_region(&m, 0.8), vec![false, true, true, true, false, false]);
    }
}
