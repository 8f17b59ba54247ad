//! Deterministic random streams.
//!
//! A stream is addressed by `(seed, counter)`; the counter selects an
//! independent ChaCha8 stream for the same seed, so components can draw from
//! their own substreams without perturbing each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0)
    }

    pub fn at(seed: u64, counter: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(counter);
        Self { seed, counter, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent stream derived from this one's address and `tag`.
    /// Does not advance `self`.
    pub fn substream(&self, tag: u64) -> Self {
        Self::at(self.seed, splitmix(self.counter ^ splitmix(tag.wrapping_add(0x9e37_79b9))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Vector of i.i.d. ±1 entries.
pub fn rademacher_probe(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sign()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_entries_are_signs() {
        let mut rng = RngStream::new(0);
        let v = rademacher_probe(&mut rng, 4);
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn same_address_same_sequence() {
        let a = rademacher_probe(&mut RngStream::at(9, 3), 64);
        let b = rademacher_probe(&mut RngStream::at(9, 3), 64);
        assert_eq!(a, b);
        let c = rademacher_probe(&mut RngStream::at(9, 4), 64);
        assert_ne!(a, c);
    }

    #[test]
    fn probe_mean_is_near_zero() {
        // sd of the mean is 1/sqrt(1e4) = 0.01, so 0.05 is a 5-sigma bound
        let v = rademacher_probe(&mut RngStream::new(1234), 10_000);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn substreams_are_independent_of_parent_state() {
        let mut parent = RngStream::new(5);
        let before = parent.substream(1).next_u64();
        parent.next_u64();
        assert_eq!(parent.substream(1).next_u64(), before);
        assert_ne!(parent.substream(2).next_u64(), before);
    }
}
