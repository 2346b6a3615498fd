//! Verbatim-quote screening against a protected corpus.
//!
//! The corpus is indexed into fixed-width character n-gram Bloom filters
//! ([`sketch`], [`indexer`]). Candidate texts are scanned for runs of
//! filter hits, which come back as quote spans ([`extractor`]). The
//! [`scrubber`] rewrites a text until its longest quote is below a
//! threshold, or abstains. [`metrics`] scores outputs against references and
//! against the whole corpus.

pub mod client;
pub mod extractor;
pub mod indexer;
pub mod metrics;
pub mod scrubber;
pub mod sketch;
pub mod textnorm;

pub use client::{CompletionClient, CompletionError};
pub use extractor::{contains_quote_longer_than, extract_quotes, max_quote_len, QuoteSpan};
pub use indexer::{CorpusDocument, IndexConfig, IndexError, IndexSet};
pub use metrics::{EvalExample, MetricReport};
pub use scrubber::{ScrubConfig, ScrubError, ScrubOutcome, ScrubStatus, Scrubber};
pub use sketch::{BloomSketch, SketchError, SketchParams};
pub use textnorm::{normalize, NormalizedText};
