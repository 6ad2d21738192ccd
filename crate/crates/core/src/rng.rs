//! Counter-based, splittable random numbers.
//!
//! Output `n` of a stream with key `k` is `mix(k ^ mix(n + C))`, where `mix` is
//! the SplitMix64 finalizer. A stream is therefore a pure function of its key:
//! draws can be addressed by `(key, counter)` and need no shared state, so
//! parallel work gets the same numbers as sequential work.
//!
//! Substreams are derived by hashing an id into the parent key:
//!
//! ```text
//! root     = Rng::new(seed)                     key = mix(seed ^ ROOT_TAG)
//! child    = parent.substream(id)               key = mix(parent.key ^ mix(id + STREAM_TAG))
//! ```
//!
//! By convention callers derive `root.substream(component).substream(chain).substream(step)`
//! with the component ids in [`component`].

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const ROOT_TAG: u64 = 0x6A09_E667_F3BC_C908;
const STREAM_TAG: u64 = 0xBB67_AE85_84CA_A73B;

/// Component ids for the first level of substream derivation.
pub mod component {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const ELBO: u64 = 5;
    pub const ORACLE: u64 = 6;
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ ROOT_TAG),
            counter: 0,
        }
    }

    /// Independent child stream. Does not advance `self`.
    pub fn substream(&self, id: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(id.wrapping_add(STREAM_TAG))),
            counter: 0,
        }
    }

    /// `Rng::new(seed).substream(component).substream(chain).substream(step)`.
    pub fn derive(seed: u64, component: u64, chain: u64, step: u64) -> Self {
        Self::new(seed)
            .substream(component)
            .substream(chain)
            .substream(step)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key ^ mix64(self.counter.wrapping_add(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-64 * n, irrelevant here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Draws consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_differ() {
        let root = Rng::new(7);
        let mut a = root.substream(1);
        let mut b = root.substream(2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn counter_addressing() {
        // Draw n of a stream does not depend on how earlier draws were consumed.
        let mut a = Rng::derive(3, component::SAMPLE, 5, 0);
        let mut b = a.clone();
        for _ in 0..10 {
            a.next_u64();
        }
        for _ in 0..10 {
            b.next_f64();
        }
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn unit_interval_mean() {
        let mut r = Rng::new(0);
        let n = 100_000;
        let mean = (0..n).map(|_| r.next_f64()).sum::<f64>() / n as f64;
        // sd of the mean is sqrt(1/12/n) ~ 9e-4
        assert!((mean - 0.5).abs() < 4e-3, "mean {mean}");
    }

    #[test]
    fn below_in_range() {
        let mut r = Rng::new(9);
        let mut seen = [0usize; 5];
        for _ in 0..10_000 {
            seen[r.below(5)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 1800 && c < 2200), "{seen:?}");
    }
}
