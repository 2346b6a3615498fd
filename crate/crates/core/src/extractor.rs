//! Verbatim quote extraction against an n-gram sketch.
//!
//! Every width-`n` window of the normalized response is looked up in the
//! sketch. A run of `k` consecutive hits is reported as one quote of length
//! `n + k - 1`. Since the sketch has no false negatives, every corpus
//! substring of length `>= n` lies inside some reported quote.

use serde::{Deserialize, Serialize};

use crate::sketch::BloomSketch;
use crate::textnorm::{normalize, NormalizedText};

/// A run of sketch hits, in both coordinate systems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteSpan {
    pub norm_start: usize,
    pub norm_end: usize,
    /// Character index into the original text.
    pub orig_start: usize,
    pub orig_end: usize,
    /// Length in normalized characters.
    pub length: usize,
    /// The original-text excerpt.
    pub text: String,
}

/// Half-open ranges `[p, p + k)` of window starts that hit the sketch.
pub fn hit_runs(sk: &BloomSketch, nt: &NormalizedText) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for (start, window) in nt.char_ngrams(sk.ngram_width()) {
        if sk.contains(window.as_bytes()) {
            open.get_or_insert(start);
        } else if let Some(first) = open.take() {
            runs.push((first, start));
        }
    }
    if let Some(first) = open {
        runs.push((first, nt.ngram_count(sk.ngram_width())));
    }
    runs
}

/// Quotes of an already normalized response.
pub fn extract_from_normalized(sk: &BloomSketch, nt: &NormalizedText) -> Vec<QuoteSpan> {
    let n = sk.ngram_width();
    hit_runs(sk, nt)
        .into_iter()
        .map(|(first, past_last)| {
            let norm_end = past_last - 1 + n;
            let (orig_start, orig_end) = nt.to_original_span(first, norm_end);
            QuoteSpan {
                norm_start: first,
                norm_end,
                orig_start,
                orig_end,
                length: norm_end - first,
                text: nt.original_slice(orig_start, orig_end).to_owned(),
            }
        })
        .collect()
}

/// Maximal quotes of `response` found in the sketch, sorted and disjoint.
pub fn extract_quotes(sk: &BloomSketch, response: &str) -> Vec<QuoteSpan> {
    extract_from_normalized(sk, &normalize(response))
}

pub fn max_quote_len(spans: &[QuoteSpan]) -> usize {
    spans.iter().map(|s| s.length).max().unwrap_or(0)
}

/// The longest span, earliest on ties.
pub fn longest_quote(spans: &[QuoteSpan]) -> Option<&QuoteSpan> {
    spans
        .iter()
        .fold(None, |best: Option<&QuoteSpan>, s| match best {
            Some(b) if b.length >= s.length => Some(b),
            _ => Some(s),
        })
}

/// Whether the response contains a corpus quote strictly longer than the
/// sketch width `tau`, i.e. two adjacent width-`tau` windows both hit.
///
/// A `false` answer is exact. A `true` answer can be wrong only when two
/// adjacent windows are both false positives, or one is and the other
/// belongs to a quote of length exactly `tau`.
pub fn contains_quote_longer_than(sk_tau: &BloomSketch, response: &str) -> bool {
    normalized_contains_quote_longer_than(sk_tau, &normalize(response))
}

pub fn normalized_contains_quote_longer_than(sk_tau: &BloomSketch, nt: &NormalizedText) -> bool {
    let mut previous_hit = false;
    for (_, window) in nt.char_ngrams(sk_tau.ngram_width()) {
        let hit = sk_tau.contains(window.as_bytes());
        if hit && previous_hit {
            return true;
        }
        previous_hit = hit;
    }
    false
}
