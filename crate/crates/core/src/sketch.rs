//! Fixed-width n-gram Bloom filter.
//!
//! Probe positions come from one seeded 128-bit XXH3 digest of the key, split
//! into two 64-bit halves and combined by double hashing:
//! `index_i = (h1 + i * h2) mod m`, with `h2` forced odd. The hash is defined
//! on bytes with fixed-width arithmetic, so the same seed and key land on the
//! same bits on every platform.

use std::io::{self, Read, Write};

use thiserror::Error;
use xxhash_rust::xxh3::xxh3_128_with_seed;

pub const MAGIC: &[u8; 8] = b"BSCRUBF1";
pub const FORMAT_VERSION: u32 = 1;
/// Header size in bytes: magic, version, width, m, k, seed, inserted count.
pub const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("expected item count must be positive")]
    ZeroItems,
    #[error("target false-positive rate {0} is outside (0, 1)")]
    BadFpr(f64),
    #[error("invalid sketch parameters: {0}")]
    InvalidParams(String),
    #[error("cannot merge sketches with different parameters ({0:?} vs {1:?})")]
    ParamMismatch(SketchParams, SketchParams),
    #[error("not a sketch file (bad magic)")]
    BadMagic,
    #[error("unsupported sketch format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated sketch: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("sketch payload has {0} unexpected trailing bytes")]
    TrailingBytes(u64),
    #[error("padding bits past m are set")]
    DirtyPadding,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Shape of a sketch. Two sketches can only be merged when these agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SketchParams {
    /// Width of the indexed character n-grams.
    pub ngram_width: u32,
    /// Number of bits, `m`.
    pub bit_count: u64,
    /// Number of probes per key.
    pub hash_count: u32,
    pub seed: u64,
}

impl SketchParams {
    /// Sizes a filter for `expected_items` keys at `target_fpr`:
    /// `m = ceil(-n ln p / ln^2 2)`, `k = max(1, round(m/n ln 2))`.
    pub fn plan(
        expected_items: u64,
        target_fpr: f64,
        ngram_width: u32,
        seed: u64,
    ) -> Result<Self, SketchError> {
        if expected_items == 0 {
            return Err(SketchError::ZeroItems);
        }
        if !(target_fpr > 0.0 && target_fpr < 1.0) {
            return Err(SketchError::BadFpr(target_fpr));
        }
        let ln2 = std::f64::consts::LN_2;
        let n = expected_items as f64;
        let bit_count = (-n * target_fpr.ln() / (ln2 * ln2)).ceil() as u64;
        let hash_count = ((bit_count as f64 / n) * ln2).round().max(1.0) as u32;
        let params = SketchParams {
            ngram_width,
            bit_count: bit_count.max(1),
            hash_count,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<(), SketchError> {
        if self.ngram_width == 0 {
            return Err(SketchError::InvalidParams("ngram width is zero".into()));
        }
        if self.bit_count == 0 || self.bit_count > (1 << 62) {
            return Err(SketchError::InvalidParams(format!(
                "bit count {} out of range",
                self.bit_count
            )));
        }
        if self.hash_count == 0 {
            return Err(SketchError::InvalidParams("hash count is zero".into()));
        }
        Ok(())
    }

    pub fn payload_len(&self) -> usize {
        self.bit_count.div_ceil(8) as usize
    }

    /// Theoretical false-positive rate after `items` distinct insertions.
    pub fn expected_fpr(&self, items: u64) -> f64 {
        let k = self.hash_count as f64;
        let fill = 1.0 - (-k * items as f64 / self.bit_count as f64).exp();
        fill.powf(k)
    }
}

/// Probe positions of one key.
#[derive(Debug, Clone)]
pub struct Probes {
    next: u64,
    step: u64,
    modulus: u64,
    left: u32,
}

impl Iterator for Probes {
    type Item = u64;

    #[inline]
    fn next(&mut self) -> Option<u64> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        let out = self.next;
        // both operands are < modulus <= 2^62, so the sum cannot overflow
        self.next += self.step;
        if self.next >= self.modulus {
            self.next -= self.modulus;
        }
        Some(out)
    }
}

/// A Bloom filter over n-gram keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomSketch {
    params: SketchParams,
    words: Vec<u64>,
    inserted_count: u64,
}

impl BloomSketch {
    /// Empty sketch with the given shape.
    pub fn new(params: SketchParams) -> Result<Self, SketchError> {
        params.validate()?;
        Ok(BloomSketch {
            params,
            words: vec![0; params.bit_count.div_ceil(64) as usize],
            inserted_count: 0,
        })
    }

    /// Plans and allocates an empty sketch; see [`SketchParams::plan`].
    pub fn plan(
        expected_items: u64,
        target_fpr: f64,
        ngram_width: u32,
        seed: u64,
    ) -> Result<Self, SketchError> {
        Self::new(SketchParams::plan(expected_items, target_fpr, ngram_width, seed)?)
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn ngram_width(&self) -> usize {
        self.params.ngram_width as usize
    }

    pub fn bit_count(&self) -> u64 {
        self.params.bit_count
    }

    pub fn hash_count(&self) -> u32 {
        self.params.hash_count
    }

    pub fn seed(&self) -> u64 {
        self.params.seed
    }

    /// Number of `insert` calls; an upper bound on distinct keys.
    pub fn inserted_count(&self) -> u64 {
        self.inserted_count
    }

    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Fraction of bits set.
    pub fn load(&self) -> f64 {
        self.popcount() as f64 / self.params.bit_count as f64
    }

    /// Probe positions for `key` under this sketch's shape.
    #[inline]
    pub fn probes(&self, key: &[u8]) -> Probes {
        let digest = xxh3_128_with_seed(key, self.params.seed);
        let h1 = digest as u64;
        let h2 = ((digest >> 64) as u64) | 1;
        let m = self.params.bit_count;
        Probes {
            next: h1 % m,
            step: h2 % m,
            modulus: m,
            left: self.params.hash_count,
        }
    }

    #[inline]
    fn get(&self, bit: u64) -> bool {
        self.words[(bit >> 6) as usize] >> (bit & 63) & 1 == 1
    }

    pub fn insert(&mut self, key: &[u8]) {
        for bit in self.probes(key) {
            self.words[(bit >> 6) as usize] |= 1 << (bit & 63);
        }
        self.inserted_count += 1;
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.probes(key).all(|bit| self.get(bit))
    }

    /// ORs `other` into `self`.
    pub fn merge_from(&mut self, other: &BloomSketch) -> Result<(), SketchError> {
        if self.params != other.params {
            return Err(SketchError::ParamMismatch(self.params, other.params));
        }
        for (dst, src) in self.words.iter_mut().zip(&other.words) {
            *dst |= src;
        }
        self.inserted_count += other.inserted_count;
        Ok(())
    }

    /// Bitwise union of two sketches with identical parameters.
    pub fn merge(a: &BloomSketch, b: &BloomSketch) -> Result<BloomSketch, SketchError> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.params.payload_len()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.params.ngram_width.to_le_bytes())?;
        w.write_all(&self.params.bit_count.to_le_bytes())?;
        w.write_all(&self.params.hash_count.to_le_bytes())?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        w.write_all(&self.inserted_count.to_le_bytes())?;
        let mut remaining = self.params.payload_len();
        for word in &self.words {
            let bytes = word.to_le_bytes();
            let take = remaining.min(8);
            w.write_all(&bytes[..take])?;
            remaining -= take;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parses a sketch; the input must contain exactly one sketch.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SketchError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(SketchError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(SketchError::Truncated {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(SketchError::UnsupportedVersion(version));
        }
        let params = SketchParams {
            ngram_width: u32_at(12),
            bit_count: u64_at(16),
            hash_count: u32_at(24),
            seed: u64_at(28),
        };
        let inserted_count = u64_at(36);
        params.validate()?;

        let payload = &bytes[HEADER_LEN..];
        let expected = params.payload_len() as u64;
        let found = payload.len() as u64;
        if found < expected {
            return Err(SketchError::Truncated {
                expected: HEADER_LEN as u64 + expected,
                found: HEADER_LEN as u64 + found,
            });
        }
        if found > expected {
            return Err(SketchError::TrailingBytes(found - expected));
        }

        let mut words = Vec::with_capacity(params.bit_count.div_ceil(64) as usize);
        for chunk in payload.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words.push(u64::from_le_bytes(buf));
        }
        let tail_bits = params.bit_count % 64;
        if tail_bits != 0 {
            let last = *words.last().expect("bit count is positive");
            if last >> tail_bits != 0 {
                return Err(SketchError::DirtyPadding);
            }
        }
        Ok(BloomSketch {
            params,
            words,
            inserted_count,
        })
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SketchError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
