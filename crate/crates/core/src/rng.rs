//! Portable, fully specified pseudo-random numbers.
//!
//! Synthetic scenes and dataset splits must be byte-reproducible in any
//! language, so the generator is spelled out here instead of borrowed from
//! a library whose algorithm may change between releases.
//!
//! * State seeding: one round of SplitMix64 on the user seed
//!   (`z = seed + 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ z>>27) * 0x94D049BB133111EB; z ^= z>>31`), replaced by
//!   `0x9E3779B97F4A7C15` if the result is zero.
//! * Step (xorshift64*): `x ^= x>>12; x ^= x<<25; x ^= x>>27;
//!   out = x * 0x2545F4914F6CDD1D` (all arithmetic wrapping, 64-bit).
//! * Uniform `[0, 1)`: `(out >> 11) * 2^-53`.
//! * Bounded integer `[0, n)`: `(out as u128 * n) >> 64`.
//! * Standard normal: Box-Muller on two uniforms `u1, u2`, using
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` and the matching `sin` term for
//!   the second value of the pair.
//! * Shuffle: Fisher-Yates from the last index down, `j = below(i + 1)`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Xorshift64Star {
    state: u64,
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(GOLDEN_GAMMA);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self {
            state: if z == 0 { GOLDEN_GAMMA } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi]` (`hi` reachable only through rounding).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Two independent standard normal deviates.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
