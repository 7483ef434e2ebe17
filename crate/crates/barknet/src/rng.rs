//! Small deterministic PRNG used everywhere randomness is needed.
//!
//! Training, dataset synthesis, splitting and weight init must all be exactly
//! reproducible from their seeds, so the generator is pinned here rather than
//! delegated to a crate whose stream may change between versions. The core is
//! SplitMix64 (Steele et al., "Fast splittable pseudorandom number generators"),
//! which passes BigCrush and needs only 64 bits of state.

/// Deterministic 64-bit-state generator. The same seed always yields the same
/// stream of values, on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1): top 53 bits scaled down.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero. Uses the widening
    /// multiply trick; the bias is < 2^-53 for the n used here and, more
    /// importantly, the result is a pure function of (state, n).
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (mul_hi(self.next_u64(), n as u64)) as usize
    }

    /// Standard normal via Box–Muller. Draws two uniforms per call so the
    /// generator keeps exactly 64 bits of state (no cached spare).
    pub fn next_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_index(i + 1);
            xs.swap(i, j);
        }
    }
}

/// High 64 bits of a 64×64 multiply, i.e. floor(a·n / 2^64).
fn mul_hi(a: u64, n: u64) -> u64 {
    ((a as u128 * n as u128) >> 64) as u64
}
