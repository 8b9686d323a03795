//! Seeded random source shared by connectivity, initialization and data generation.
//!
//! The stream is ChaCha8 keyed through `SeedableRng::seed_from_u64` (rand_core's
//! PCG32-based seed expansion). Every derived quantity is built from raw
//! `next_u64` words using the fixed reductions below, so results do not depend on
//! any distribution implementation that could drift between library versions:
//!
//! * `below(n)`: rejection sampling. Let `r = 2^64 mod n`; draw words until one is
//!   `>= r`, return it `mod n`.
//! * `unit()`: `(word >> 11) * 2^-53`, a double in `[0, 1)`.
//! * `normal()`: Box-Muller on two `unit()` draws (cosine branch only).
//! * `sample_distinct(n, k)`: partial Fisher-Yates over `0..n`; for `i in 0..k`
//!   swap slot `i` with slot `i + below(n - i)`, then keep the first `k` slots.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream for a named purpose, so adding draws in one place
    /// never shifts another.
    pub fn derived(seed: u64, stream: u64) -> Self {
        let mut rng = Self::new(seed);
        rng.inner.set_stream(stream);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let reject = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= reject {
                return x % n;
            }
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<u32> {
        assert!(k <= n, "cannot draw {k} distinct values from {n}");
        let mut pool: Vec<u32> = (0..n as u32).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
