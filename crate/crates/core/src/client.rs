//! Text-completion clients used for generation and rewriting.
//!
//! [`HttpCompletionClient`] talks to a chat-completions style endpoint. The
//! mocks are deterministic and exist so the rewrite loop can be exercised
//! without a model.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::extractor::{extract_from_normalized, longest_quote, QuoteSpan};
use crate::sketch::BloomSketch;
use crate::textnorm::normalize;

#[derive(Debug, Error)]
pub enum CompletionError {
    #[error("completion transport error: {0}")]
    Transport(String),
    #[error("completion endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected completion response: {0}")]
    Decode(String),
    #[error("completion client misconfigured: {0}")]
    Config(String),
}

/// A model that turns an instruction and an input text into a completion.
///
/// For rewrites, `instruction` is the fully rendered rewrite prompt (which
/// already embeds the text) and `input` is the text being rewritten. For
/// generation, `instruction` is empty and `input` is the user prompt.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, instruction: &str, input: &str) -> Result<String, CompletionError>;
}

impl<C: CompletionClient + ?Sized> CompletionClient for Arc<C> {
    fn complete(&self, instruction: &str, input: &str) -> Result<String, CompletionError> {
        (**self).complete(instruction, input)
    }
}

impl<C: CompletionClient + ?Sized> CompletionClient for &C {
    fn complete(&self, instruction: &str, input: &str) -> Result<String, CompletionError> {
        (**self).complete(instruction, input)
    }
}

/// Returns the input unchanged. As a rewriter this never makes progress.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityClient;

impl CompletionClient for IdentityClient {
    fn complete(&self, _instruction: &str, input: &str) -> Result<String, CompletionError> {
        Ok(input.to_owned())
    }
}

/// Adapts a closure.
pub struct FnClient<F>(pub F);

impl<F> CompletionClient for FnClient<F>
where
    F: Fn(&str, &str) -> Result<String, CompletionError> + Send + Sync,
{
    fn complete(&self, instruction: &str, input: &str) -> Result<String, CompletionError> {
        (self.0)(instruction, input)
    }
}

/// Which detected quotes the sentinel rewriter overwrites per call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentinelMode {
    AllQuotes,
    LongestOnly,
}

/// Greek lowercase letters; chosen to be absent from the protected corpus.
pub const DEFAULT_SENTINELS: &str = "αβγδεζηθικλμνξοπρστυφχψω";

/// Deterministic mock rewriter. It finds quotes in the input with its own
/// sketch and overwrites every original character behind each flagged
/// normalized position with a rotation through a sentinel alphabet.
#[derive(Debug, Clone)]
pub struct SentinelRewriter {
    sketch: Arc<BloomSketch>,
    mode: SentinelMode,
    alphabet: Vec<char>,
}

impl SentinelRewriter {
    pub fn new(sketch: Arc<BloomSketch>, mode: SentinelMode) -> Self {
        Self::with_alphabet(sketch, mode, DEFAULT_SENTINELS)
    }

    pub fn with_alphabet(sketch: Arc<BloomSketch>, mode: SentinelMode, alphabet: &str) -> Self {
        let alphabet: Vec<char> = alphabet.chars().collect();
        assert!(!alphabet.is_empty(), "sentinel alphabet is empty");
        SentinelRewriter {
            sketch,
            mode,
            alphabet,
        }
    }

    pub fn rewrite(&self, text: &str) -> String {
        let nt = normalize(text);
        let quotes = extract_from_normalized(&self.sketch, &nt);
        let flagged: Vec<&QuoteSpan> = match self.mode {
            SentinelMode::AllQuotes => quotes.iter().collect(),
            SentinelMode::LongestOnly => longest_quote(&quotes).into_iter().collect(),
        };
        let mut chars: Vec<char> = text.chars().collect();
        let mut turn = 0;
        for span in flagged {
            for &orig in &nt.offset_map()[span.norm_start..span.norm_end] {
                chars[orig] = self.alphabet[turn % self.alphabet.len()];
                turn += 1;
            }
        }
        chars.into_iter().collect()
    }
}

impl CompletionClient for SentinelRewriter {
    fn complete(&self, _instruction: &str, input: &str) -> Result<String, CompletionError> {
        Ok(self.rewrite(input))
    }
}

/// Answers every request with the same text.
#[derive(Debug, Clone)]
pub struct CannedClient(pub String);

impl CompletionClient for CannedClient {
    fn complete(&self, _instruction: &str, _input: &str) -> Result<String, CompletionError> {
        Ok(self.0.clone())
    }
}

/// Settings for [`HttpCompletionClient`], usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpClientConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn default_timeout() -> u64 {
    60
}

/// Blocking client for a chat-completions compatible endpoint.
#[derive(Debug)]
pub struct HttpCompletionClient {
    config: HttpClientConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpCompletionClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, CompletionError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                CompletionError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| CompletionError::Config(e.to_string()))?;
        Ok(HttpCompletionClient {
            config,
            api_key,
            http,
        })
    }

    pub fn config(&self) -> &HttpClientConfig {
        &self.config
    }

    /// The JSON request body for one call.
    pub fn request_body(&self, instruction: &str, input: &str) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        let user = if instruction.is_empty() { input } else { instruction };
        messages.push(json!({"role": "user", "content": user}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        if let Some(max) = self.config.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

/// First choice's message content of a chat-completions response body.
pub fn parse_chat_response(body: &str) -> Result<String, CompletionError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| CompletionError::Decode(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| CompletionError::Decode("response has no message content".into()))
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, instruction: &str, input: &str) -> Result<String, CompletionError> {
        let mut req = self
            .http
            .post(&self.config.endpoint)
            .json(&self.request_body(instruction, input));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(CompletionError::Status {
                status: status.as_u16(),
                body,
            });
        }
        parse_chat_response(&body)
    }
}

/// Caps the number of concurrent calls into the wrapped client.
pub struct InflightLimit<C> {
    inner: C,
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl<C> InflightLimit<C> {
    pub fn new(inner: C, limit: usize) -> Self {
        InflightLimit {
            inner,
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<C: CompletionClient> CompletionClient for InflightLimit<C> {
    fn complete(&self, instruction: &str, input: &str) -> Result<String, CompletionError> {
        {
            let mut active = self.active.lock().unwrap();
            while *active >= self.limit {
                active = self.freed.wait(active).unwrap();
            }
            *active += 1;
        }
        let out = self.inner.complete(instruction, input);
        *self.active.lock().unwrap() -= 1;
        self.freed.notify_one();
        out
    }
}
