//! Keyed random streams.
//!
//! Every random draw made while generating an item comes from a stream keyed
//! by `(dataset_seed, traj_id, category, frame_index)`. The key is hashed with
//! SHA-256 into a ChaCha8 seed, so draws do not depend on worker scheduling or
//! on how many other items were generated before.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub struct RngStream {
    rng: ChaCha8Rng,
}

/// Stable 64-bit hash of an arbitrary key string.
pub fn stable_hash64(key: &str) -> u64 {
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl RngStream {
    pub fn new(dataset_seed: u64, traj_id: &str, category: &str, frame_index: usize) -> Self {
        // traj ids never contain '\u{1f}', so the key is unambiguous
        let key = format!("{dataset_seed}\u{1f}{traj_id}\u{1f}{category}\u{1f}{frame_index}");
        Self::from_key(&key)
    }

    pub fn from_key(key: &str) -> Self {
        let digest = Sha256::digest(key.as_bytes());
        let seed: [u8; 32] = digest.into();
        Self { rng: ChaCha8Rng::from_seed(seed) }
    }

    /// A stream for a sub-purpose of this key (e.g. a second stage of sampling).
    pub fn substream(dataset_seed: u64, traj_id: &str, category: &str, frame_index: usize, purpose: &str) -> Self {
        Self::from_key(&format!("{dataset_seed}\u{1f}{traj_id}\u{1f}{category}\u{1f}{frame_index}\u{1f}{purpose}"))
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher–Yates, returning the permutation applied (`out[i] = old[perm[i]]`).
    pub fn shuffle<T>(&mut self, v: &mut [T]) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..v.len()).collect();
        for i in (1..v.len()).rev() {
            let j = self.below(i + 1);
            v.swap(i, j);
            perm.swap(i, j);
        }
        perm
    }

    /// Index drawn proportionally to `weights`; `None` if all are zero.
    pub fn weighted_index(&mut self, weights: &[f64]) -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut x = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return Some(i);
            }
            x -= w;
        }
        weights.iter().rposition(|w| *w > 0.0)
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let mut a = RngStream::new(7, "t1", "RS", 3);
        let mut b = RngStream::new(7, "t1", "RS", 3);
        let xa: Vec<f64> = (0..5).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..5).map(|_| b.uniform()).collect();
        assert_eq!(xa, xb);
        let mut c = RngStream::new(7, "t1", "RS", 4);
        assert_ne!(xa[0], c.uniform());
    }

    #[test]
    fn shuffle_tracks_permutation() {
        let mut r = RngStream::from_key("x");
        let orig = vec!['a', 'b', 'c', 'd', 'e'];
        let mut v = orig.clone();
        let perm = r.shuffle(&mut v);
        for i in 0..v.len() {
            assert_eq!(v[i], orig[perm[i]]);
        }
    }

    #[test]
    fn weighted_index_skips_zero_weights() {
        let mut r = RngStream::from_key("w");
        for _ in 0..200 {
            let i = r.weighted_index(&[0.0, 1.0, 0.0, 2.0]).unwrap();
            assert!(i == 1 || i == 3);
        }
        assert_eq!(r.weighted_index(&[0.0, 0.0]), None);
    }
}
