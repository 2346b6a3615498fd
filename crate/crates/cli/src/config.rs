//! Optional TOML configuration. Values given on the command line win over
//! the file, and the file wins over built-in defaults.

use std::path::Path;

use quotescrub_core::client::HttpClientConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Classify, Kind};

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub index: IndexSection,
    pub scrub: ScrubSection,
    pub eval: EvalSection,
    pub http: Option<HttpClientConfig>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub n: Option<usize>,
    pub metric_widths: Option<Vec<usize>>,
    pub fpr: Option<f64>,
    pub seed: Option<u64>,
    pub expected_items: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScrubSection {
    pub tau: Option<usize>,
    pub max_iters: Option<usize>,
    pub abstain: Option<bool>,
    pub guidance: Option<String>,
    pub rewriter: Option<String>,
    pub rewrite_template: Option<String>,
    pub unguided_template: Option<String>,
    pub abstention_text: Option<String>,
    pub retries: Option<u32>,
    pub max_failures: Option<usize>,
    pub max_inflight: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub acs_min_block: Option<usize>,
    pub minhash_permutations: Option<usize>,
    pub minhash_seed: Option<u64>,
    pub lcs_mode: Option<String>,
}

pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .or_kind(Kind::Io, || format!("reading config {}", path.display()))?;
    toml::from_str(&text).or_kind(Kind::Format, || format!("parsing config {}", path.display()))
}

pub fn load_http(path: &Path) -> CliResult<HttpClientConfig> {
    let text = std::fs::read_to_string(path)
        .or_kind(Kind::Io, || format!("reading HTTP config {}", path.display()))?;
    toml::from_str(&text).or_kind(Kind::Format, || format!("parsing HTTP config {}", path.display()))
}

/// First present value: flag, then file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
