//! The detect-and-rewrite loop.
//!
//! A response is scanned for verbatim quotes; while its longest quote is at
//! least `tau` characters long, the rewriter is asked to paraphrase it with
//! the longest quote called out, up to `max_iterations` times. A response
//! that is still over the threshold afterwards is either replaced by a fixed
//! refusal (abstention) or returned as is and marked over threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{CompletionClient, CompletionError};
use crate::extractor::{
    extract_quotes, longest_quote, max_quote_len, normalized_contains_quote_longer_than,
    QuoteSpan,
};
use crate::sketch::BloomSketch;
use crate::textnorm::normalize;

pub const TEXT_PLACEHOLDER: &str = "{TEXT}";
pub const QUOTE_PLACEHOLDER: &str = "{LONGEST_QUOTE}";

pub const DEFAULT_REWRITE_TEMPLATE: &str = "{TEXT}\n\nParaphrase the provided text while preserving its meaning, using different words and sentence structures. Ensure clarity, coherence, and maintain any specified tone or style. Importantly, completely rewrite this part of text: {LONGEST_QUOTE}";

pub const DEFAULT_ABSTENTION: &str = "Sorry, I am unable to respond.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guidance {
    /// The prompt names the longest detected quote.
    #[default]
    QuoteGuided,
    /// Plain paraphrase request.
    Unguided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScrubConfig {
    /// Longest tolerated quote, in normalized characters.
    pub tau: usize,
    pub max_iterations: usize,
    pub abstain: bool,
    pub guidance: Guidance,
    pub rewrite_template: String,
    /// Template for unguided rewrites. Derived from `rewrite_template` by
    /// dropping the sentence that carries the quote when unset.
    pub unguided_template: Option<String>,
    pub abstention_text: String,
}

impl Default for ScrubConfig {
    fn default() -> Self {
        ScrubConfig {
            tau: 50,
            max_iterations: 5,
            abstain: true,
            guidance: Guidance::QuoteGuided,
            rewrite_template: DEFAULT_REWRITE_TEMPLATE.to_owned(),
            unguided_template: None,
            abstention_text: DEFAULT_ABSTENTION.to_owned(),
        }
    }
}

impl ScrubConfig {
    /// The template used for the configured guidance mode.
    pub fn active_template(&self) -> Result<String, ScrubError> {
        match self.guidance {
            Guidance::QuoteGuided => {
                for p in [TEXT_PLACEHOLDER, QUOTE_PLACEHOLDER] {
                    if !self.rewrite_template.contains(p) {
                        return Err(ScrubError::Template(format!("guided template lacks {p}")));
                    }
                }
                Ok(self.rewrite_template.clone())
            }
            Guidance::Unguided => {
                let t = match &self.unguided_template {
                    Some(t) => t.clone(),
                    None => strip_quote_sentence(&self.rewrite_template),
                };
                if !t.contains(TEXT_PLACEHOLDER) {
                    return Err(ScrubError::Template(format!(
                        "unguided template lacks {TEXT_PLACEHOLDER}"
                    )));
                }
                Ok(t)
            }
        }
    }
}

/// Cuts the template before the sentence holding the quote placeholder.
fn strip_quote_sentence(template: &str) -> String {
    match template.find(QUOTE_PLACEHOLDER) {
        None => template.to_owned(),
        Some(at) => {
            let head = &template[..at];
            let cut = head
                .rfind(['.', '!', '?'])
                .map(|i| i + 1)
                .unwrap_or(0);
            template[..cut].trim_end().to_owned()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrubStatus {
    /// No rewrite was needed.
    CleanInitial,
    /// Rewrites brought the longest quote under the threshold.
    Scrubbed,
    /// Replaced with the abstention text.
    Abstained,
    /// Still over the threshold; abstention disabled.
    OverThreshold,
}

/// One rewrite round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrubIteration {
    /// Quotes found in the text that was sent for rewriting.
    pub quotes: Vec<QuoteSpan>,
    pub max_len: usize,
    pub rewrite_prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrubOutcome {
    pub final_text: String,
    pub status: ScrubStatus,
    pub iterations_used: usize,
    pub trace: Vec<ScrubIteration>,
    /// Longest quote in `final_text`.
    pub residual_max_quote_len: usize,
    /// The generator's raw output, when the response was generated here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_response: Option<String>,
}

#[derive(Debug, Error)]
pub enum ScrubError {
    #[error("bad rewrite template: {0}")]
    Template(String),
    #[error("quote-guided prompt needs at least one quote")]
    NoQuotes,
    #[error("abstention text itself contains a {0}-character corpus quote")]
    AbstentionNotClean(usize),
    #[error("generation failed: {0}")]
    Generation(#[source] CompletionError),
    #[error("rewrite failed after {} iterations: {source}", partial.iterations_used)]
    Rewrite {
        #[source]
        source: CompletionError,
        /// State of the loop when the call failed.
        partial: Box<ScrubOutcome>,
    },
}

/// Fills the template for the configured guidance mode.
pub fn build_rewrite_prompt(
    cfg: &ScrubConfig,
    text: &str,
    quotes: &[QuoteSpan],
) -> Result<String, ScrubError> {
    let template = cfg.active_template()?;
    match cfg.guidance {
        Guidance::QuoteGuided => {
            let quote = longest_quote(quotes).ok_or(ScrubError::NoQuotes)?;
            Ok(template
                .replace(QUOTE_PLACEHOLDER, &quote.text)
                .replace(TEXT_PLACEHOLDER, text))
        }
        Guidance::Unguided => Ok(template.replace(TEXT_PLACEHOLDER, text)),
    }
}

/// The rewrite loop bound to one extraction sketch and configuration.
#[derive(Debug)]
pub struct Scrubber<'a> {
    sketch: &'a BloomSketch,
    cfg: ScrubConfig,
    abstention_quote_len: usize,
}

impl<'a> Scrubber<'a> {
    /// Validates the templates and screens the abstention text once.
    pub fn new(sketch: &'a BloomSketch, cfg: ScrubConfig) -> Result<Self, ScrubError> {
        cfg.active_template()?;
        if cfg.tau < sketch.ngram_width() {
            log::warn!(
                "tau {} is below the sketch width {}; quotes shorter than the width are invisible",
                cfg.tau,
                sketch.ngram_width()
            );
        }
        let abstention_quote_len = max_quote_len(&extract_quotes(sketch, &cfg.abstention_text));
        if abstention_quote_len >= cfg.tau {
            return Err(ScrubError::AbstentionNotClean(abstention_quote_len));
        }
        Ok(Scrubber {
            sketch,
            cfg,
            abstention_quote_len,
        })
    }

    pub fn config(&self) -> &ScrubConfig {
        &self.cfg
    }

    pub fn sketch(&self) -> &BloomSketch {
        self.sketch
    }

    pub fn scrub(
        &self,
        response: &str,
        rewriter: &dyn CompletionClient,
    ) -> Result<ScrubOutcome, ScrubError> {
        let tau = self.cfg.tau;
        let mut text = response.to_owned();
        let mut trace = Vec::new();

        let mut quotes = extract_quotes(self.sketch, &text);
        let mut longest = max_quote_len(&quotes);
        while longest >= tau && trace.len() < self.cfg.max_iterations {
            let prompt = build_rewrite_prompt(&self.cfg, &text, &quotes)?;
            let rewritten = rewriter.complete(&prompt, &text);
            trace.push(ScrubIteration {
                quotes,
                max_len: longest,
                rewrite_prompt: prompt,
            });
            text = match rewritten {
                Ok(t) => t,
                Err(source) => {
                    let residual = max_quote_len(&extract_quotes(self.sketch, &text));
                    return Err(ScrubError::Rewrite {
                        source,
                        partial: Box::new(ScrubOutcome {
                            final_text: text,
                            status: ScrubStatus::OverThreshold,
                            iterations_used: trace.len(),
                            trace,
                            residual_max_quote_len: residual,
                            initial_response: None,
                        }),
                    });
                }
            };
            // re-extract on every new text, including the last rewrite
            quotes = extract_quotes(self.sketch, &text);
            longest = max_quote_len(&quotes);
        }

        let iterations_used = trace.len();
        let (final_text, status, residual) = if longest < tau {
            let status = if iterations_used == 0 {
                ScrubStatus::CleanInitial
            } else {
                ScrubStatus::Scrubbed
            };
            (text, status, longest)
        } else if self.cfg.abstain {
            (
                self.cfg.abstention_text.clone(),
                ScrubStatus::Abstained,
                self.abstention_quote_len,
            )
        } else {
            (text, ScrubStatus::OverThreshold, longest)
        };
        Ok(ScrubOutcome {
            final_text,
            status,
            iterations_used,
            trace,
            residual_max_quote_len: residual,
            initial_response: None,
        })
    }

    /// Generates a response for `prompt`, then scrubs it.
    pub fn generate_then_scrub(
        &self,
        prompt: &str,
        generator: &dyn CompletionClient,
        rewriter: &dyn CompletionClient,
    ) -> Result<ScrubOutcome, ScrubError> {
        let initial = generator
            .complete("", prompt)
            .map_err(ScrubError::Generation)?;
        match self.scrub(&initial, rewriter) {
            Ok(mut outcome) => {
                outcome.initial_response = Some(initial);
                Ok(outcome)
            }
            Err(ScrubError::Rewrite { source, mut partial }) => {
                partial.initial_response = Some(initial);
                Err(ScrubError::Rewrite { source, partial })
            }
            Err(e) => Err(e),
        }
    }
}

/// One-shot form of [`Scrubber::scrub`].
pub fn scrub(
    response: &str,
    sketch: &BloomSketch,
    cfg: &ScrubConfig,
    rewriter: &dyn CompletionClient,
) -> Result<ScrubOutcome, ScrubError> {
    Scrubber::new(sketch, cfg.clone())?.scrub(response, rewriter)
}

/// One-shot form of [`Scrubber::generate_then_scrub`].
pub fn generate_then_scrub(
    prompt: &str,
    generator: &dyn CompletionClient,
    sketch: &BloomSketch,
    cfg: &ScrubConfig,
    rewriter: &dyn CompletionClient,
) -> Result<ScrubOutcome, ScrubError> {
    Scrubber::new(sketch, cfg.clone())?.generate_then_scrub(prompt, generator, rewriter)
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: usize,
    pub mean_iterations: f64,
    /// Fraction of outputs with a quote longer than the metric sketch width.
    pub r_gt_q: f64,
}

/// Scrubs every response once per threshold and measures rewrite effort and
/// residual long quotes.
pub fn tau_sweep(
    responses: &[String],
    sketch: &BloomSketch,
    metric_sketch: &BloomSketch,
    taus: &[usize],
    base: &ScrubConfig,
    rewriter: &dyn CompletionClient,
) -> Result<Vec<SweepPoint>, ScrubError> {
    let total = responses.len().max(1) as f64;
    taus.iter()
        .map(|&tau| {
            let scrubber = Scrubber::new(sketch, ScrubConfig { tau, ..base.clone() })?;
            let outcomes = responses
                .par_iter()
                .map(|r| scrubber.scrub(r, rewriter))
                .collect::<Result<Vec<_>, _>>()?;
            let iterations: usize = outcomes.iter().map(|o| o.iterations_used).sum();
            let flagged = outcomes
                .iter()
                .filter(|o| normalized_contains_quote_longer_than(metric_sketch, &normalize(&o.final_text)))
                .count();
            Ok(SweepPoint {
                tau,
                mean_iterations: iterations as f64 / total,
                r_gt_q: flagged as f64 / total,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{CannedClient, FnClient, IdentityClient, SentinelMode, SentinelRewriter};
    use crate::sketch::SketchParams;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    const PASSAGE: &str = "the committee voted on wednesday to recommend that the vaccine be made available to boys and young men";

    fn sketch() -> BloomSketch {
        let mut sk = BloomSketch::new(SketchParams::plan(10_000, 1e-6, 25, 5).unwrap()).unwrap();
        for (_, w) in normalize(PASSAGE).char_ngrams(25) {
            sk.insert(w.as_bytes());
        }
        sk
    }

    fn span(start: usize, length: usize, text: &str) -> QuoteSpan {
        QuoteSpan {
            norm_start: start,
            norm_end: start + length,
            orig_start: start,
            orig_end: start + length,
            length,
            text: text.into(),
        }
    }

    #[test]
    fn guided_prompt_embeds_longest_quote() {
        let cfg = ScrubConfig::default();
        let quotes = vec![span(0, 26, "short one"), span(40, 61, "the long one")];
        let p = build_rewrite_prompt(&cfg, "BODY", &quotes).unwrap();
        assert!(p.starts_with("BODY\n\nParaphrase the provided text"));
        assert!(p.ends_with("Importantly, completely rewrite this part of text: the long one"));
    }

    #[test]
    fn tie_goes_to_earliest_quote() {
        let cfg = ScrubConfig::default();
        let quotes = vec![span(0, 30, "first"), span(50, 30, "second")];
        let p = build_rewrite_prompt(&cfg, "x", &quotes).unwrap();
        assert!(p.ends_with(": first"));
    }

    #[test]
    fn unguided_prompt_drops_quote_sentence() {
        let cfg = ScrubConfig {
            guidance: Guidance::Unguided,
            ..Default::default()
        };
        let p = build_rewrite_prompt(&cfg, "BODY", &[span(0, 30, "q")]).unwrap();
        assert_eq!(
            p,
            "BODY\n\nParaphrase the provided text while preserving its meaning, using different words and sentence structures. Ensure clarity, coherence, and maintain any specified tone or style."
        );
        assert!(build_rewrite_prompt(&cfg, "BODY", &[]).is_ok());
    }

    #[test]
    fn template_errors() {
        let cfg = ScrubConfig {
            rewrite_template: "{TEXT} only".into(),
            ..Default::default()
        };
        assert!(matches!(build_rewrite_prompt(&cfg, "t", &[span(0, 1, "q")]), Err(ScrubError::Template(_))));
        let cfg = ScrubConfig::default();
        assert!(matches!(build_rewrite_prompt(&cfg, "t", &[]), Err(ScrubError::NoQuotes)));
    }

    #[test]
    fn clean_response_exits_immediately() {
        let sk = sketch();
        let calls = AtomicUsize::new(0);
        let rw = FnClient(|_: &str, i: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(i.to_owned())
        });
        let out = scrub("Nothing quoted here at all.", &sk, &ScrubConfig::default(), &rw).unwrap();
        assert_eq!(out.status, ScrubStatus::CleanInitial);
        assert_eq!(out.iterations_used, 0);
        assert_eq!(out.final_text, "Nothing quoted here at all.");
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn empty_response_is_clean() {
        let out = scrub("", &sketch(), &ScrubConfig::default(), &IdentityClient).unwrap();
        assert_eq!(out.status, ScrubStatus::CleanInitial);
        assert_eq!(out.final_text, "");
    }

    #[test]
    fn sentinel_rewriter_scrubs_in_one_round() {
        let sk = sketch();
        let rw = SentinelRewriter::new(Arc::new(sk.clone()), SentinelMode::AllQuotes);
        let response = format!("Reportedly, {PASSAGE}, officials said.");
        let out = scrub(&response, &sk, &ScrubConfig::default(), &rw).unwrap();
        assert_eq!(out.status, ScrubStatus::Scrubbed);
        assert_eq!(out.iterations_used, 1);
        assert!(out.residual_max_quote_len < 50);
        assert_eq!(out.trace[0].max_len, PASSAGE.len());
        assert!(!normalize(&out.final_text).normalized().contains(&PASSAGE[..50]));
    }

    #[test]
    fn identity_rewriter_hits_the_cap_then_abstains() {
        let sk = sketch();
        let calls = AtomicUsize::new(0);
        let rw = FnClient(|_: &str, i: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(i.to_owned())
        });
        let out = scrub(PASSAGE, &sk, &ScrubConfig::default(), &rw).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 5);
        assert_eq!(out.iterations_used, 5);
        assert_eq!(out.status, ScrubStatus::Abstained);
        assert_eq!(out.final_text, "Sorry, I am unable to respond.");
        assert_eq!(out.trace.len(), 5);
    }

    #[test]
    fn no_abstention_keeps_last_rewrite() {
        let sk = sketch();
        let cfg = ScrubConfig {
            abstain: false,
            max_iterations: 2,
            ..Default::default()
        };
        let out = scrub(PASSAGE, &sk, &cfg, &IdentityClient).unwrap();
        assert_eq!(out.status, ScrubStatus::OverThreshold);
        assert_eq!(out.final_text, PASSAGE);
        assert_eq!(out.residual_max_quote_len, PASSAGE.len());
    }

    #[test]
    fn zero_iterations_goes_straight_to_abstention() {
        let sk = sketch();
        let cfg = ScrubConfig {
            max_iterations: 0,
            ..Default::default()
        };
        let out = scrub(PASSAGE, &sk, &cfg, &IdentityClient).unwrap();
        assert_eq!(out.status, ScrubStatus::Abstained);
        assert_eq!(out.iterations_used, 0);
    }

    #[test]
    fn transport_error_carries_partial_trace() {
        let sk = sketch();
        let calls = AtomicUsize::new(0);
        let rw = FnClient(|_: &str, i: &str| {
            if calls.fetch_add(1, Ordering::SeqCst) == 1 {
                Err(CompletionError::Transport("down".into()))
            } else {
                Ok(i.to_owned())
            }
        });
        match scrub(PASSAGE, &sk, &ScrubConfig::default(), &rw) {
            Err(ScrubError::Rewrite { partial, .. }) => {
                assert_eq!(partial.iterations_used, 2);
                assert_eq!(partial.final_text, PASSAGE);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn abstention_text_is_screened() {
        let sk = sketch();
        let cfg = ScrubConfig {
            abstention_text: PASSAGE.to_owned(),
            ..Default::default()
        };
        assert!(matches!(Scrubber::new(&sk, cfg), Err(ScrubError::AbstentionNotClean(_))));
    }

    #[test]
    fn generation_composes_with_scrub() {
        let sk = sketch();
        let cfg = ScrubConfig::default();
        let rw = SentinelRewriter::new(Arc::new(sk.clone()), SentinelMode::AllQuotes);
        let generated = generate_then_scrub("p", &CannedClient(PASSAGE.into()), &sk, &cfg, &rw).unwrap();
        let direct = scrub(PASSAGE, &sk, &cfg, &rw).unwrap();
        assert_eq!(generated.initial_response.as_deref(), Some(PASSAGE));
        assert_eq!(generated.final_text, direct.final_text);
        assert_eq!(generated.trace, direct.trace);

        let clean = generate_then_scrub("p", &CannedClient("hello there".into()), &sk, &cfg, &rw).unwrap();
        assert_eq!(clean.status, ScrubStatus::CleanInitial);

        let failing = FnClient(|_: &str, _: &str| Err(CompletionError::Transport("x".into())));
        assert!(matches!(
            generate_then_scrub("p", &failing, &sk, &cfg, &rw),
            Err(ScrubError::Generation(_))
        ));
    }

    #[test]
    fn guided_and_unguided_share_loop_control() {
        let sk = sketch();
        let guided = scrub(PASSAGE, &sk, &ScrubConfig { abstain: false, ..Default::default() }, &IdentityClient).unwrap();
        let unguided = scrub(
            PASSAGE,
            &sk,
            &ScrubConfig { abstain: false, guidance: Guidance::Unguided, ..Default::default() },
            &IdentityClient,
        )
        .unwrap();
        assert_eq!(guided.iterations_used, unguided.iterations_used);
        assert_eq!(guided.status, unguided.status);
        assert_ne!(guided.trace[0].rewrite_prompt, unguided.trace[0].rewrite_prompt);
    }
}
