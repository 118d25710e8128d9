//! Counter-based deterministic random number generation.
//!
//! Every random quantity in the crate is a pure function of a root seed, a
//! string label and integer indices, so results are reproducible across runs
//! and independent of evaluation order or thread count. The generator is the
//! SplitMix64 finalizer applied to `key + (ctr+1)*GOLDEN`, which is exactly
//! the SplitMix64 sequence evaluated at an arbitrary counter.
//!
//! Gaussians use Box-Muller on two consecutive counter values; the sequence
//! for a given seed is fixed by construction (`sqrt` is IEEE-exact, `ln`/`cos`
//! are correctly rounded by the system libm on mainstream targets).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `ctr`-th value of the SplitMix64 stream keyed by `key`.
#[inline]
pub fn ranval(key: u64, ctr: u64) -> u64 {
    mix64(key.wrapping_add(ctr.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform(key: u64, ctr: u64) -> f64 {
    (ranval(key, ctr) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller on counters `2*ctr` and `2*ctr + 1`.
///
/// Entry `ctr` of the stream is fully determined by `(key, ctr)` alone, so
/// Gaussian fields (e.g. projection matrices) can be generated in any order.
#[inline]
pub fn gaussian(key: u64, ctr: u64) -> f64 {
    // u1 in (0, 1] to keep ln finite.
    let u1 = 1.0 - uniform(key, 2 * ctr);
    let u2 = uniform(key, 2 * ctr + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// FNV-1a hash of a label string.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01B3);
    }
    h
}

/// Derive a child seed from `(seed, label, index)`.
///
/// This is the only way seeds flow between pipeline stages; the derivation
/// tree is documented in the `pipeline` module.
pub fn derive(seed: u64, label: &str, index: u64) -> u64 {
    mix64(seed ^ mix64(fnv1a(label).wrapping_add(mix64(index))))
}

/// Sequential view over a counter stream.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    ctr: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Stream { key, ctr: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = ranval(self.key, self.ctr);
        self.ctr += 1;
        v
    }

    pub fn next_f64(&mut self) -> f64 {
        let v = uniform(self.key, self.ctr);
        self.ctr += 1;
        v
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let v = gaussian(self.key, self.ctr);
        self.ctr += 1;
        v
    }

    /// Uniform integer in `[0, bound)` via the 128-bit multiply method.
    /// The residual bias is at most `bound / 2^64`, negligible here.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `count` distinct values sampled uniformly from `0..n`, ascending.
    pub fn sample_distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        debug_assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        // Partial Fisher-Yates: the first `count` slots end up uniform.
        for i in 0..count {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut picked = pool[..count].to_vec();
        picked.sort_unstable();
        picked
    }
}
