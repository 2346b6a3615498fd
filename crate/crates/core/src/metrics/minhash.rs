use std::collections::HashSet;

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::textnorm::{normalize, words};

pub const DEFAULT_PERMUTATIONS: usize = 128;
const SHINGLE_WORDS: usize = 3;
/// 2^61 - 1
const MERSENNE_61: u64 = (1 << 61) - 1;

/// Word 3-shingles of the normalized text. Texts with fewer than three
/// words form a single shingle; empty text has none.
pub fn shingles(text: &str) -> HashSet<String> {
    let nt = normalize(text);
    let ws = words(nt.normalized());
    if ws.is_empty() {
        return HashSet::new();
    }
    if ws.len() < SHINGLE_WORDS {
        return HashSet::from([ws.join(" ")]);
    }
    ws.windows(SHINGLE_WORDS).map(|w| w.join(" ")).collect()
}

/// Exact Jaccard similarity of the shingle sets. Two empty sets score 1.
pub fn exact_jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (shingles(a), shingles(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// MinHash over word shingles with seeded universal-hash permutations
/// `x -> (a x + b) mod (2^61 - 1)`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    seed: u64,
    coefficients: Vec<(u64, u64)>,
}

impl Default for MinHasher {
    fn default() -> Self {
        MinHasher::new(DEFAULT_PERMUTATIONS, 0)
    }
}

impl MinHasher {
    pub fn new(permutations: usize, seed: u64) -> Self {
        let mut state = seed;
        let coefficients = (0..permutations.max(1))
            .map(|_| {
                let a = splitmix64(&mut state) % (MERSENNE_61 - 1) + 1;
                let b = splitmix64(&mut state) % MERSENNE_61;
                (a, b)
            })
            .collect();
        MinHasher { seed, coefficients }
    }

    pub fn permutations(&self) -> usize {
        self.coefficients.len()
    }

    /// Per-permutation minima; `u64::MAX` everywhere for an empty text.
    pub fn signature(&self, text: &str) -> Vec<u64> {
        let mut sig = vec![u64::MAX; self.coefficients.len()];
        for shingle in shingles(text) {
            let x = xxh3_64_with_seed(shingle.as_bytes(), self.seed) % MERSENNE_61;
            for (slot, &(a, b)) in sig.iter_mut().zip(&self.coefficients) {
                let h = ((a as u128 * x as u128 + b as u128) % MERSENNE_61 as u128) as u64;
                *slot = (*slot).min(h);
            }
        }
        sig
    }

    /// Fraction of matching signature slots.
    pub fn similarity(&self, a: &[u64], b: &[u64]) -> f64 {
        assert_eq!(a.len(), b.len(), "signatures from different hashers");
        let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
        same as f64 / a.len() as f64
    }
}
