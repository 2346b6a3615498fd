//! Text normalization with a position map back to the original text.
//!
//! Normalization lowercases, deletes punctuation and symbol characters, and
//! collapses whitespace runs into a single space. Every normalized character
//! remembers the index (in characters) of the original character it came
//! from, so spans found in normalized space can be cut out of the text the
//! user actually sees.

use unicode_general_category::{get_general_category, GeneralCategory};

/// A normalized view of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    original: String,
    normalized: String,
    /// Original character index for every normalized character.
    offset_map: Vec<usize>,
    /// Byte offset of every normalized character, plus one trailing entry.
    norm_bytes: Vec<usize>,
    /// Byte offset of every original character, plus one trailing entry.
    orig_bytes: Vec<usize>,
}

fn is_deleted(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

/// Single-character lowercase mapping. The only multi-character expansion in
/// the Unicode tables (U+0130) keeps its base letter.
fn lower(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Normalizes `text`. Total and deterministic; normalizing the output again
/// returns it unchanged.
pub fn normalize(text: &str) -> NormalizedText {
    let mut normalized = String::with_capacity(text.len());
    let mut offset_map = Vec::with_capacity(text.len());
    let mut norm_bytes = Vec::with_capacity(text.len() + 1);
    let mut orig_bytes = Vec::with_capacity(text.len() + 1);
    let mut pending_space: Option<usize> = None;

    for (idx, (byte, c)) in text.char_indices().enumerate() {
        orig_bytes.push(byte);
        if c.is_whitespace() {
            pending_space.get_or_insert(idx);
            continue;
        }
        if is_deleted(c) {
            continue;
        }
        if let Some(space_at) = pending_space.take() {
            if !normalized.is_empty() {
                norm_bytes.push(normalized.len());
                normalized.push(' ');
                offset_map.push(space_at);
            }
        }
        norm_bytes.push(normalized.len());
        normalized.push(lower(c));
        offset_map.push(idx);
    }
    orig_bytes.push(text.len());
    norm_bytes.push(normalized.len());

    NormalizedText {
        original: text.to_owned(),
        normalized,
        offset_map,
        norm_bytes,
        orig_bytes,
    }
}

impl NormalizedText {
    pub fn original(&self) -> &str {
        &self.original
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }

    pub fn offset_map(&self) -> &[usize] {
        &self.offset_map
    }

    /// Length of the normalized text in characters.
    pub fn len(&self) -> usize {
        self.offset_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset_map.is_empty()
    }

    /// Length of the original text in characters.
    pub fn original_len(&self) -> usize {
        self.orig_bytes.len() - 1
    }

    /// Normalized characters `[start, end)` as a string slice.
    pub fn normalized_slice(&self, start: usize, end: usize) -> &str {
        &self.normalized[self.norm_bytes[start]..self.norm_bytes[end]]
    }

    /// Original characters `[start, end)` as a string slice.
    pub fn original_slice(&self, start: usize, end: usize) -> &str {
        &self.original[self.orig_bytes[start]..self.orig_bytes[end]]
    }

    /// Maps a normalized span to the original-character span it came from.
    ///
    /// Panics when `start >= end` or `end > self.len()`.
    pub fn to_original_span(&self, start: usize, end: usize) -> (usize, usize) {
        assert!(
            start < end && end <= self.len(),
            "normalized span {start}..{end} out of range for length {}",
            self.len()
        );
        (self.offset_map[start], self.offset_map[end - 1] + 1)
    }

    /// Character n-gram windows over the normalized text.
    pub fn char_ngrams(&self, n: usize) -> CharNgrams<'_> {
        assert!(n >= 1, "n-gram width must be positive");
        CharNgrams {
            text: self,
            width: n,
            next: 0,
        }
    }

    /// Number of width-`n` windows.
    pub fn ngram_count(&self, n: usize) -> usize {
        (self.len() + 1).saturating_sub(n)
    }

    /// Window starting at normalized index `start`, `n` characters wide.
    pub fn window(&self, start: usize, n: usize) -> &str {
        self.normalized_slice(start, start + n)
    }
}

/// Iterator over `(start, window)` pairs; see [`NormalizedText::char_ngrams`].
#[derive(Debug, Clone)]
pub struct CharNgrams<'a> {
    text: &'a NormalizedText,
    width: usize,
    next: usize,
}

impl<'a> Iterator for CharNgrams<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next + self.width > self.text.len() {
            return None;
        }
        let start = self.next;
        self.next += 1;
        Some((start, self.text.window(start, self.width)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.text.len() + 1).saturating_sub(self.width + self.next);
        (left, Some(left))
    }
}

impl ExactSizeIterator for CharNgrams<'_> {}

/// Normalized text split into words on single spaces.
pub fn words(normalized: &str) -> Vec<&str> {
    if normalized.is_empty() {
        Vec::new()
    } else {
        normalized.split(' ').collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input() {
        let nt = normalize("");
        assert_eq!(nt.normalized(), "");
        assert!(nt.offset_map().is_empty());
        assert_eq!(nt.char_ngrams(1).count(), 0);
    }

    #[test]
    fn hello_world() {
        let nt = normalize("Hello,  World!");
        assert_eq!(nt.normalized(), "hello world");
        assert_eq!(nt.offset_map()[0], 0);
        assert_eq!(nt.offset_map()[5], 6);
        assert_eq!(nt.offset_map()[6], 8);
        let (s, e) = nt.to_original_span(6, 11);
        assert_eq!((s, e), (8, 13));
        assert_eq!(nt.original_slice(s, e), "World");
    }

    #[test]
    fn deletion_joins_and_collapses() {
        assert_eq!(normalize("don't").normalized(), "dont");
        assert_eq!(normalize("a , b").normalized(), "a b");
        assert_eq!(normalize("  \t a\n\n b  ").normalized(), "a b");
        assert_eq!(normalize("$5 + 3 = 8").normalized(), "5 3 8");
        assert_eq!(normalize("Größe İstanbul ΣΑΣ").normalized(), "größe istanbul σασ");
    }

    #[test]
    fn full_span_maps_to_whole_original() {
        let nt = normalize("Abc def");
        assert_eq!(nt.to_original_span(0, nt.len()), (0, 7));
    }

    #[test]
    fn ngram_windows() {
        let nt = normalize("abcde");
        let got: Vec<_> = nt.char_ngrams(4).collect();
        assert_eq!(got, vec![(0, "abcd"), (1, "bcde")]);
        assert_eq!(normalize("abcd").char_ngrams(25).count(), 0);
    }

    #[test]
    #[should_panic]
    fn empty_span_is_a_contract_violation() {
        normalize("abc").to_original_span(1, 1);
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z0-9 ,.;:!?'\"()\\-\t\n]{0,80}",
            any::<String>(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn invariants_hold(text in text_strategy()) {
            let nt = normalize(&text);
            prop_assert_eq!(nt.offset_map().len(), nt.normalized().chars().count());
            prop_assert!(nt.offset_map().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(nt.offset_map().iter().all(|&i| i < nt.original_len()));
            let mut prev_space = true;
            for c in nt.normalized().chars() {
                prop_assert_eq!(lower(c), c);
                prop_assert!(!is_deleted(c));
                let space = c.is_whitespace();
                prop_assert!(!space || c == ' ');
                prop_assert!(!(space && prev_space));
                prev_space = space;
            }
            prop_assert!(!nt.normalized().ends_with(' '));
        }

        #[test]
        fn idempotent(text in text_strategy()) {
            let once = normalize(&text);
            let twice = normalize(once.normalized());
            prop_assert_eq!(once.normalized(), twice.normalized());
            let identity: Vec<usize> = (0..twice.len()).collect();
            prop_assert_eq!(twice.offset_map(), &identity[..]);
        }

        #[test]
        fn window_count(text in text_strategy(), n in 1usize..30) {
            let nt = normalize(&text);
            let brute = (0..nt.len()).filter(|&s| s + n <= nt.len()).count();
            prop_assert_eq!(nt.char_ngrams(n).count(), brute);
            prop_assert_eq!(nt.ngram_count(n), brute);
            let starts: Vec<usize> = nt.char_ngrams(n).map(|(s, _)| s).collect();
            prop_assert!(starts.windows(2).all(|w| w[1] == w[0] + 1));
        }

        #[test]
        fn span_round_trip(text in text_strategy(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
            let nt = normalize(&text);
            prop_assume!(!nt.is_empty());
            let (x, y) = (a.index(nt.len()), b.index(nt.len()));
            let (start, end) = (x.min(y), x.max(y) + 1);
            let (os, oe) = nt.to_original_span(start, end);
            let again = normalize(nt.original_slice(os, oe));
            // Boundary spaces of a span are trimmed when the slice is renormalized.
            prop_assert_eq!(again.normalized(), nt.normalized_slice(start, end).trim_matches(' '));
        }
    }
}
