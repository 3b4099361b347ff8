//! Seeded PRNG with explicit substreams.
//!
//! Every random choice in this crate flows through [`Pcg32`], a PCG
//! XSH-RR 64/32 generator. Reproducibility is part of the API contract:
//! a (seed, stream) pair fully determines the output sequence, and
//! independent units of work (forest trees, synthetic recordings,
//! windows) each get their own stream so they can run in parallel and
//! still produce the output of a sequential run.
//!
//! Constants and the seeding procedure follow the PCG reference
//! implementation (`pcg32_srandom_r`). Any reimplementation that wants
//! bit-identical output must reproduce them exactly.

const MULTIPLIER: u64 = 6364136223846793005;

/// PCG XSH-RR 64/32: 64-bit state, 32-bit output, one stream per
/// odd increment.
#[derive(Debug, Clone)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

impl Pcg32 {
    /// Generator for `stream` of `seed`. Distinct streams of one seed
    /// are statistically independent sequences.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = Pcg32 {
            state: 0,
            inc: (stream << 1) | 1,
        };
        rng.next_u32();
        rng.state = rng.state.wrapping_add(seed);
        rng.next_u32();
        rng
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old.wrapping_mul(MULTIPLIER).wrapping_add(self.inc);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`. The modulo bias at 64 bits is
    /// below 2^-50 for any bound that fits in memory; determinism, not
    /// exact uniformity, is what callers rely on.
    pub fn next_index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_index bound must be positive");
        (self.next_u64() % bound as u64) as usize
    }

    /// Exponential with the given mean, via inversion. Strictly
    /// positive draw: the u = 0 branch of `-ln(1 - u)` is excluded.
    pub fn next_exp(&mut self, mean: f64) -> f64 {
        debug_assert!(mean > 0.0);
        // 1 - u is in (0, 1], so ln is finite and the result is >= 0;
        // nudge u away from the measure-zero endpoint.
        let u = self.next_f64().min(1.0 - 1e-16);
        -mean * (1.0 - u).ln()
    }

    /// Standard normal via Box-Muller (one value per pair of uniforms).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64().max(1e-300);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}
