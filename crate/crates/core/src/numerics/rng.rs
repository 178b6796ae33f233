use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seeded random stream with reproducible child derivation.
///
/// Backed by the counter-based ChaCha12 generator, so the same seed yields the
/// same sequence on every platform. Child streams are derived from the parent
/// seed and a child index (not from the parent's consumption state), which
/// makes them independent of how much the parent has been used and lets
/// parallel experiment cells own their own streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
    seed: u64,
    path: Vec<u64>,
}

// 64-bit finalizer from SplitMix64; decorrelates nearby seeds/indices.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        RngStream {
            rng: ChaCha12Rng::seed_from_u64(seed),
            seed,
            path: Vec::new(),
        }
    }

    /// Derive the `index`-th child stream. Children of the same parent with
    /// different indices produce unrelated sequences.
    pub fn child(&self, index: u64) -> Self {
        let child_seed = mix(self.derived_seed() ^ mix(index.wrapping_add(1)));
        let mut path = self.path.clone();
        path.push(index);
        RngStream {
            rng: ChaCha12Rng::seed_from_u64(child_seed),
            seed: self.seed,
            path,
        }
    }

    fn derived_seed(&self) -> u64 {
        let mut s = mix(self.seed);
        for &p in &self.path {
            s = mix(s ^ mix(p.wrapping_add(1)));
        }
        s
    }

    /// Stream identifier for logs: root seed plus the child-index path.
    pub fn id(&self) -> String {
        if self.path.is_empty() {
            format!("{}", self.seed)
        } else {
            let path: Vec<String> = self.path.iter().map(|p| p.to_string()).collect();
            format!("{}/{}", self.seed, path.join("/"))
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw.
    pub fn next_standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in [0, bound) without modulo bias.
    pub fn next_index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_index bound must be positive");
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle of `items`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}
