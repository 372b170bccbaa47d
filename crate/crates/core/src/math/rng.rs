//! Deterministic pseudo-random numbers.
//!
//! The generator is xoshiro256** (Blackman & Vigna). Its 256-bit state is
//! filled from a 64-bit seed by four successive SplitMix64 outputs, so the same
//! seed always produces the same stream on every platform.
//!
//! Independent streams are obtained with [`derive_seed`]: a child seed is a
//! SplitMix64 hash of the master seed, a purpose tag and an index. Layer `l`
//! always draws its masks from `derive_seed(master, Stream::Mask, l)`, so adding
//! a layer or changing how many numbers another purpose consumes never shifts
//! an existing stream.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purposes that get their own random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Weight initialization, indexed by layer.
    Init,
    /// Drop masks, indexed by layer.
    Mask,
    /// Mini-batch order.
    Shuffle,
    /// Synthetic data and dataset subsampling/splitting.
    Data,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x696E_6974,
            Stream::Mask => 0x6D61_736B,
            Stream::Shuffle => 0x7368_7566,
            Stream::Data => 0x6461_7461,
        }
    }
}

/// Child seed for `(purpose, index)` under `master`.
///
/// `mix64(mix64(master ^ tag * GAMMA) + (index + 1) * GAMMA)`.
pub fn derive_seed(master: u64, purpose: Stream, index: u64) -> u64 {
    let base = mix64(master ^ purpose.tag().wrapping_mul(GOLDEN_GAMMA));
    mix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// xoshiro256** generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut next = || {
            sm = sm.wrapping_add(GOLDEN_GAMMA);
            mix64(sm)
        };
        let s = [next(), next(), next(), next()];
        Self { s }
    }

    /// Generator for a derived child stream.
    pub fn stream(master: u64, purpose: Stream, index: u64) -> Self {
        Self::new(derive_seed(master, purpose, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Standard normal draw via Box-Muller (one pair per call, second value discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
