//! Splittable deterministic random streams.
//!
//! SplitMix64 (Vigna). Every consumer derives its stream from a `(seed,
//! lane)` pair so that independent workers never share state and a fixed
//! seed reproduces the full sample path bit for bit.

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derive the substream for `lane`. Lane 0 is distinct from the raw
    /// seeded stream, so parent and child streams never overlap.
    pub fn lane(seed: u64, lane: u64) -> Self {
        let mut root = SplitMix64::seed_from_u64(seed);
        let a = root.next_u64();
        let mut mixer = SplitMix64::seed_from_u64(a ^ lane.wrapping_mul(0xA076_1D64_78BD_642F));
        mixer.next_u64();
        SplitMix64::seed_from_u64(mixer.next_u64())
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64) / DEN
    }

    /// Unbiased uniform integer in [0, bound) by rejection.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }
}
