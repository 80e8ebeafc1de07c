//! Seeded pseudorandom numbers with a fixed, platform-independent algorithm.
//!
//! The generator is xorshift64* (Vigna, 2016): a 64-bit xorshift state with
//! shifts (12, 25, 27) whose output is multiplied by `0x2545F4914F6CDD1D`.
//! Seeds are expanded through one round of SplitMix64 so that small or
//! adjacent seeds give unrelated streams and the state is never zero.

use crate::scalar::Scalar;

const XORSHIFT_MULTIPLIER: u64 = 0x2545_F491_4F6C_DD1D;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let state = splitmix64(seed);
        Self {
            state: if state == 0 { XORSHIFT_MULTIPLIER } else { state },
        }
    }

    /// Derives an independent stream for a labelled sub-task (e.g. one run,
    /// one epoch) without disturbing this generator.
    pub fn derive(&self, label: u64) -> Self {
        Self::new(self.state ^ splitmix64(label.wrapping_add(0x632B_E59B_D9B4_E019)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(XORSHIFT_MULTIPLIER)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn uniform_scalar<T: Scalar>(&mut self, lo: T, hi: T) -> T {
        T::lit(self.uniform(lo.as_f64(), hi.as_f64()))
    }

    /// Uniform integer in `0..n` (n > 0), rejection sampled to avoid modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal draw (Box-Muller, cosine branch only).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
