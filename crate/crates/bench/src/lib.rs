//! Fixtures for the benchmarks: reproducible pseudo-text and a sketch over it.

use quotescrub_core::sketch::{BloomSketch, SketchParams};
use quotescrub_core::textnorm::normalize;

/// Lowercase words of 2..=8 letters, at least `chars` long, from a 64-bit LCG.
pub fn synthetic_text(seed: u64, chars: usize) -> String {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        state = state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (state >> 33) as usize
    };
    let mut out = String::with_capacity(chars + 16);
    while out.len() < chars {
        if !out.is_empty() {
            out.push(' ');
        }
        let len = 2 + next() % 7;
        out.extend((0..len).map(|_| (b'a' + (next() % 26) as u8) as char));
    }
    out
}

/// Sketch of every width-`n` window of `docs`, sized for `fpr`.
pub fn sketch_of(docs: &[String], n: usize, fpr: f64) -> BloomSketch {
    let items: usize = docs.iter().map(|d| normalize(d).ngram_count(n)).sum();
    let params = SketchParams::plan(items.max(1) as u64, fpr, n as u32, 0).expect("valid plan");
    let mut sk = BloomSketch::new(params).expect("valid params");
    for d in docs {
        for (_, w) in normalize(d).char_ngrams(n) {
            sk.insert(w.as_bytes());
        }
    }
    sk
}
