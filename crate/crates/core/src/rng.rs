//! Small counter-based pseudo-random generator.
//!
//! Every randomised routine in the crate derives its randomness from a
//! 64-bit seed through keyed splitmix64 streams. A value is a pure
//! function of `(seed, key words...)`, so results are reproducible across
//! runs and independent of evaluation order — parallel workers can each
//! derive their own stream without coordination.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GAMMA);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a list of key words into a single stream seed.
pub fn derive_key(words: &[u64]) -> u64 {
    let mut acc = 0x853c_49e6_748f_ea9bu64;
    for &w in words {
        acc = splitmix64(acc ^ w);
    }
    acc
}

/// Sequential generator over a derived stream.
#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(words: &[u64]) -> Self {
        Stream {
            state: derive_key(words),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        splitmix64(self.state)
    }

    /// Uniform in `[0, bound)` by rejection, exactly unbiased.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }
}
