//! Synthetic corpora and brute-force oracles shared by the integration tests.
//!
//! Corpus text uses lowercase ASCII letters and single spaces only, so it is
//! already normalized. Filler uses digits, which never occur in the corpus,
//! so a planted corpus substring cannot be extended by its surroundings.
#![allow(dead_code)]

use quotescrub_core::indexer::CorpusDocument;
use quotescrub_core::sketch::{BloomSketch, SketchParams};
use quotescrub_core::textnorm::normalize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn word(rng: &mut impl Rng) -> String {
    let len = rng.random_range(2..=9);
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

/// Random letter words joined by single spaces, at least `min_chars` long.
pub fn letters_text(rng: &mut impl Rng, min_chars: usize) -> String {
    let mut out = word(rng);
    while out.len() < min_chars {
        out.push(' ');
        out.push_str(&word(rng));
    }
    out
}

/// Digit groups joined by single spaces; never empty, never padded.
pub fn filler(rng: &mut impl Rng, min_chars: usize) -> String {
    let mut out = digit_group(rng);
    while out.len() < min_chars {
        out.push(' ');
        out.push_str(&digit_group(rng));
    }
    out
}

fn digit_group(rng: &mut impl Rng) -> String {
    let len = rng.random_range(1..=6);
    (0..len).map(|_| rng.random_range(b'0'..=b'9') as char).collect()
}

pub fn corpus(seed: u64, docs: usize, min_chars: usize) -> Vec<CorpusDocument> {
    let mut r = rng(seed);
    (0..docs)
        .map(|i| CorpusDocument::new(format!("doc-{i}"), letters_text(&mut r, min_chars)))
        .collect()
}

/// A substring of some corpus document with exactly `len` characters and no
/// space at either end.
pub fn corpus_substring(rng: &mut impl Rng, corpus: &[CorpusDocument], len: usize) -> String {
    loop {
        let doc = &corpus[rng.random_range(0..corpus.len())].text;
        if doc.len() < len {
            continue;
        }
        let start = rng.random_range(0..=doc.len() - len);
        let s = &doc[start..start + len];
        if !s.starts_with(' ') && !s.ends_with(' ') {
            return s.to_owned();
        }
    }
}

/// Sketch of every width-`n` window of the corpus, planned for `fpr`.
pub fn sketch_for(corpus: &[CorpusDocument], n: usize, fpr: f64, seed: u64) -> BloomSketch {
    let windows: u64 = corpus
        .iter()
        .map(|d| normalize(&d.text).ngram_count(n) as u64)
        .sum();
    let mut sk = BloomSketch::new(SketchParams::plan(windows.max(1), fpr, n as u32, seed).unwrap()).unwrap();
    for d in corpus {
        for (_, w) in normalize(&d.text).char_ngrams(n) {
            sk.insert(w.as_bytes());
        }
    }
    sk
}

/// Normalized corpus texts for substring search.
pub fn normalized_corpus(corpus: &[CorpusDocument]) -> Vec<String> {
    corpus
        .iter()
        .map(|d| normalize(&d.text).normalized().to_owned())
        .collect()
}

/// Whether some substring of the normalized `text` with at least `len`
/// characters occurs verbatim in a corpus document. Plain substring search.
pub fn has_corpus_quote_at_least(corpus_norm: &[String], text: &str, len: usize) -> bool {
    if len == 0 {
        return true;
    }
    let chars: Vec<char> = normalize(text).normalized().chars().collect();
    if chars.len() < len {
        return false;
    }
    (0..=chars.len() - len).any(|start| {
        let window: String = chars[start..start + len].iter().collect();
        corpus_norm.iter().any(|doc| doc.contains(&window))
    })
}

/// Length of the longest normalized substring of `text` found in the corpus.
pub fn longest_corpus_quote(corpus_norm: &[String], text: &str) -> usize {
    let chars: Vec<char> = normalize(text).normalized().chars().collect();
    let mut best = 0;
    for start in 0..chars.len() {
        let mut len = best + 1;
        while start + len <= chars.len() {
            let window: String = chars[start..start + len].iter().collect();
            if corpus_norm.iter().any(|doc| doc.contains(&window)) {
                best = len;
                len += 1;
            } else {
                break;
            }
        }
    }
    best
}

pub fn report(id: &str, pass: bool, detail: &str) {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}

/// [`filler`] with a minimum length drawn from `range`.
pub fn filler_in(rng: &mut impl Rng, range: std::ops::Range<usize>) -> String {
    let min = rng.random_range(range);
    filler(rng, min)
}

/// [`letters_text`] with a minimum length drawn from `range`.
pub fn letters_in(rng: &mut impl Rng, range: std::ops::Range<usize>) -> String {
    let min = rng.random_range(range);
    letters_text(rng, min)
}

/// Exact set of every normalized corpus substring of one fixed length.
pub struct CorpusGrams {
    len: usize,
    grams: std::collections::HashSet<String>,
}

impl CorpusGrams {
    pub fn new(corpus_norm: &[String], len: usize) -> Self {
        let mut grams = std::collections::HashSet::new();
        for doc in corpus_norm {
            let chars: Vec<char> = doc.chars().collect();
            for w in chars.windows(len) {
                grams.insert(w.iter().collect());
            }
        }
        CorpusGrams { len, grams }
    }

    /// Same answer as [`has_corpus_quote_at_least`] for this length.
    pub fn has_quote(&self, text: &str) -> bool {
        let chars: Vec<char> = normalize(text).normalized().chars().collect();
        chars
            .windows(self.len)
            .any(|w| self.grams.contains(&w.iter().collect::<String>()))
    }
}
