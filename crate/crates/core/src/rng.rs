//! Deterministic pseudo-random numbers.
//!
//! SplitMix64 (Steele, Lea & Flood) with named streams. A stream is keyed by
//! `mix64(seed ^ fnv1a64(name))`, so the same `(seed, name)` pair yields the
//! same sequence in any implementation that follows these definitions:
//!
//! - `next_u64`: `state += 0x9E3779B97F4A7C15; return mix64(state)`
//! - `next_f64`: `(next_u64() >> 11) * 2^-53`, uniform on `[0, 1)`
//! - `normal`: Box-Muller on `u1 = 1 - next_f64()`, `u2 = next_f64()`,
//!   returning `sqrt(-2 ln u1) cos(2π u2)` and caching the sine branch.

/// Stream used for weight initialization.
pub const WEIGHTS: &str = "weights";
/// Stream used for dropout masks.
pub const DROPOUT: &str = "dropout";
/// Stream used for dataset sampling and minibatch shuffling.
pub const DATA: &str = "data";
/// Stream used by the Monte-Carlo moments oracle.
pub const MOMENTS: &str = "moments";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_normal: None,
        }
    }

    /// Independent stream for `(seed, name)`.
    pub fn stream(seed: u64, name: &str) -> Self {
        Self::new(mix64(seed ^ fnv1a64(name)))
    }

    /// Child generator seeded from the next output of this one.
    pub fn split(&mut self) -> Self {
        Self::new(mix64(self.next_u64()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform index in `0..n` (n > 0).
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
