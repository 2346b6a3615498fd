//! Infringement and utility metrics.
//!
//! Character-level metrics run over normalized characters and word-level
//! metrics over normalized text split on single spaces.

mod minhash;
mod report;

pub use minhash::{exact_jaccard, shingles, MinHasher, DEFAULT_PERMUTATIONS};
pub use report::{
    evaluate, percent_r_gt_q, win_rate, Aggregates, Direction, EvalExample, EvalOptions,
    MetricError, MetricReport, MetricTable, QaPair, WinRate, WIN_RATE_METRICS,
};

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::textnorm::{normalize, words};

/// Longest-common-subsequence length, two rows of memory.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0u32; short.len() + 1];
    let mut cur = vec![0u32; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()] as usize
}

/// Longest common contiguous run.
pub fn longest_common_substring_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0u32; b.len() + 1];
    let mut cur = vec![0u32; b.len() + 1];
    let mut best = 0;
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best as usize
}

/// Unit-cost edit distance.
pub fn edit_distance<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Which "LCS" the report computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcsMode {
    #[default]
    Subsequence,
    Substring,
}

fn norm_chars(text: &str) -> Vec<char> {
    normalize(text).normalized().chars().collect()
}

fn norm_words(text: &str) -> Vec<String> {
    words(normalize(text).normalized())
        .into_iter()
        .map(str::to_owned)
        .collect()
}

pub fn lcs_char(a: &str, b: &str) -> usize {
    lcs_len(&norm_chars(a), &norm_chars(b))
}

pub fn lcs_word(a: &str, b: &str) -> usize {
    lcs_len(&norm_words(a), &norm_words(b))
}

pub fn lcs_char_with(a: &str, b: &str, mode: LcsMode) -> usize {
    let (a, b) = (norm_chars(a), norm_chars(b));
    match mode {
        LcsMode::Subsequence => lcs_len(&a, &b),
        LcsMode::Substring => longest_common_substring_len(&a, &b),
    }
}

pub fn lcs_word_with(a: &str, b: &str, mode: LcsMode) -> usize {
    let (a, b) = (norm_words(a), norm_words(b));
    match mode {
        LcsMode::Subsequence => lcs_len(&a, &b),
        LcsMode::Substring => longest_common_substring_len(&a, &b),
    }
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    edit_distance(&norm_chars(a), &norm_chars(b))
}

pub const DEFAULT_ACS_MIN_BLOCK: usize = 3;

/// Words of `response` covered by common word blocks with `reference`.
/// Blocks are taken greedily, longest first, never reusing a word on either
/// side; blocks shorter than `min_block` words are ignored. Ties go to the
/// block that starts first in the response, then in the reference.
pub fn acs_blocks<T: Eq>(response: &[T], reference: &[T], min_block: usize) -> usize {
    let min_block = min_block.max(1);
    let mut used_r = vec![false; response.len()];
    let mut used_g = vec![false; reference.len()];
    let mut total = 0;
    loop {
        // (length, response start, reference start)
        let mut best: Option<(usize, usize, usize)> = None;
        let mut prev = vec![0usize; reference.len() + 1];
        let mut cur = vec![0usize; reference.len() + 1];
        for (i, x) in response.iter().enumerate() {
            for (j, y) in reference.iter().enumerate() {
                let len = if x == y && !used_r[i] && !used_g[j] {
                    prev[j] + 1
                } else {
                    0
                };
                cur[j + 1] = len;
                if len == 0 {
                    continue;
                }
                let cand = (len, i + 1 - len, j + 1 - len);
                let better = match best {
                    None => true,
                    Some((bl, bi, bj)) => len > bl || (len == bl && (cand.1, cand.2) < (bi, bj)),
                };
                if better {
                    best = Some(cand);
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        match best {
            Some((len, i, j)) if len >= min_block => {
                used_r[i..i + len].iter_mut().for_each(|u| *u = true);
                used_g[j..j + len].iter_mut().for_each(|u| *u = true);
                total += len;
            }
            _ => return total,
        }
    }
}

pub fn acs_word(response: &str, reference: &str) -> usize {
    acs_word_with(response, reference, DEFAULT_ACS_MIN_BLOCK)
}

pub fn acs_word_with(response: &str, reference: &str, min_block: usize) -> usize {
    acs_blocks(&norm_words(response), &norm_words(reference), min_block)
}

fn f1(overlap: usize, a_len: usize, b_len: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / a_len as f64;
    let r = overlap as f64 / b_len as f64;
    2.0 * p * r / (p + r)
}

fn multiset_overlap<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for t in b {
        *counts.entry(t).or_default() += 1;
    }
    a.iter()
        .filter(|t| match counts.get_mut(t) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Unigram-overlap F1. Two empty texts score 1.
pub fn rouge1(a: &str, b: &str) -> f64 {
    let (a, b) = (norm_words(a), norm_words(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    f1(multiset_overlap(&a, &b), a.len(), b.len())
}

/// LCS-based F1 over words. Two empty texts score 1.
pub fn rouge_l(a: &str, b: &str) -> f64 {
    let (a, b) = (norm_words(a), norm_words(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    f1(lcs_len(&a, &b), a.len(), b.len())
}

pub fn minhash_sim(a: &str, b: &str) -> f64 {
    let hasher = MinHasher::default();
    hasher.similarity(&hasher.signature(a), &hasher.signature(b))
}

/// Answer tokens: normalized words without English articles.
pub fn answer_tokens(text: &str) -> Vec<String> {
    norm_words(text)
        .into_iter()
        .filter(|w| !matches!(w.as_str(), "a" | "an" | "the"))
        .collect()
}

/// Token-level F1 between a predicted and a gold answer.
pub fn qa_f1(predicted: &str, gold: &str) -> f64 {
    let (p, g) = (answer_tokens(predicted), answer_tokens(gold));
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    f1(multiset_overlap(&p, &g), p.len(), g.len())
}
