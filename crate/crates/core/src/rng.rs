//! Counter-addressed random streams.
//!
//! Every random quantity in the crate is a pure function of
//! `(master_seed, purpose, index, position)`. The stream for a given
//! `(purpose, index)` is a ChaCha8 keystream whose key is derived from the
//! master seed and the purpose tag, whose stream id is the index and whose
//! word position is set explicitly. Results therefore never depend on how
//! work is split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep unrelated consumers on disjoint keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Brownian = 1,
    Starts = 2,
    Pairs = 3,
    Sweep = 4,
    Grid = 5,
    Misc = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key_for(master_seed: u64, purpose: Purpose) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = master_seed ^ (purpose as u64).rotate_left(32);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// A ChaCha8 generator positioned on stream `index` of `purpose`.
pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key_for(master_seed, purpose));
    rng.set_stream(index);
    rng
}

/// Derives an independent child seed, e.g. one per worker or sub-experiment.
pub fn child_seed(master_seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    // (0, 1]: never zero, so the logarithm below stays finite.
    ((bits >> 11) as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normals addressed by `(stream, block)`.
///
/// Block `k` consumes exactly `4 * ceil(width / 2)` 32-bit words, so block
/// `k` can be generated without touching blocks `0..k`.
pub struct NormalBlocks {
    rng: ChaCha8Rng,
    width: usize,
    words_per_block: u128,
}

impl NormalBlocks {
    pub fn new(master_seed: u64, purpose: Purpose, index: u64, width: usize) -> Self {
        let pairs = width.div_ceil(2) as u128;
        Self {
            rng: stream(master_seed, purpose, index),
            width,
            words_per_block: 4 * pairs,
        }
    }

    /// Fills `out` (length `width`) with the normals of block `block`.
    pub fn fill(&mut self, block: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.width);
        self.rng.set_word_pos(block as u128 * self.words_per_block);
        self.fill_next(out);
    }

    /// Fills `out` with the block following the previous one.
    pub fn fill_next(&mut self, out: &mut [f64]) {
        let mut i = 0;
        while i < self.width {
            let u1 = unit_open(self.rng.next_u64());
            let u2 = unit_open(self.rng.next_u64());
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            out[i] = r * c;
            if i + 1 < self.width {
                out[i + 1] = r * s;
            }
            i += 2;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let mut a = NormalBlocks::new(7, Purpose::Brownian, 3, 3);
        let mut seq = vec![[0.0; 3]; 10];
        a.fill(0, &mut seq[0]);
        for row in seq.iter_mut().skip(1) {
            a.fill_next(row);
        }
        let mut b = NormalBlocks::new(7, Purpose::Brownian, 3, 3);
        for k in (0..10).rev() {
            let mut out = [0.0; 3];
            b.fill(k as u64, &mut out);
            assert_eq!(out, seq[k]);
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = NormalBlocks::new(7, Purpose::Brownian, 0, 1);
        let mut b = NormalBlocks::new(7, Purpose::Brownian, 1, 1);
        let mut c = NormalBlocks::new(7, Purpose::Starts, 0, 1);
        let (mut x, mut y, mut z) = ([0.0], [0.0], [0.0]);
        a.fill(0, &mut x);
        b.fill(0, &mut y);
        c.fill(0, &mut z);
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn normal_moments() {
        let mut g = NormalBlocks::new(11, Purpose::Misc, 0, 2);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut buf = [0.0; 2];
        for _ in 0..n / 2 {
            g.fill_next(&mut buf);
            for v in buf {
                s1 += v;
                s2 += v * v;
            }
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}
