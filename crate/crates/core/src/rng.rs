//! Counter-based splittable PRNG (SplitMix64 finalizer in counter mode).
//!
//! Draw `i` of a stream is a pure hash of `(key, i)`, so streams never share
//! state: [`CounterRng::substream`] derives an independent generator per
//! sample index, and the draws a sample sees do not depend on how many other
//! samples were generated before it, or in what order.

use alloc::vec::Vec;

/// Weyl increment applied per draw (golden-ratio constant of SplitMix64).
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
/// Domain tags keep the root key and substream keys out of each other's orbit.
const SEED_TAG: u64 = 0x53_52_4F_50_31_52_4E_47; // "SROP1RNG"
const STREAM_TAG: u64 = 0x73_75_62_73_74_72_6D_73; // "substrms"

/// SplitMix64 finalizer: bijective avalanche mix of a 64-bit word.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-mode generator; `Clone` snapshots the position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: mix(seed ^ SEED_TAG),
            counter: 0,
        }
    }

    /// Independent stream for `index`; unaffected by draws made on `self`.
    pub fn substream(&self, index: u64) -> Self {
        CounterRng {
            key: mix(self.key ^ mix(index ^ STREAM_TAG)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1) with 53 significant bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n) via widening multiply; `n` must be nonzero.
    pub fn uniform_int(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Fisher-Yates shuffle of `items`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_int(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `count` draws from [lo, hi), convenience for samplers.
    pub fn uniform_vec(&mut self, count: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..count).map(|_| self.uniform(lo, hi)).collect()
    }
}
