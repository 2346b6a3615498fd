use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use clap::ValueEnum;
use quotescrub_core::client::{
    CompletionClient, HttpClientConfig, HttpCompletionClient, IdentityClient, InflightLimit,
    SentinelMode, SentinelRewriter,
};
use quotescrub_core::scrubber::{tau_sweep, Guidance, ScrubConfig, ScrubError, ScrubOutcome, ScrubStatus, Scrubber};
use serde::{Deserialize, Serialize};

use crate::config::{self, pick, FileConfig};
use crate::error::{self, CliError, CliResult, Classify, Kind};
use crate::io;
use crate::manifest::{self, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewriterKind {
    /// Replaces every detected quote with sentinel characters.
    Mock,
    /// Replaces only the longest detected quote.
    MockLongest,
    /// Returns the text unchanged.
    Identity,
    /// Chat-completions endpoint from the HTTP config.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceArg {
    Quote,
    None,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Extraction sketch (.bsf).
    #[arg(long)]
    sketch: PathBuf,
    /// JSONL input of {"id", "text"} (or "response") objects.
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path [default: <out>.manifest.json when --out is given].
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Longest tolerated quote in normalized characters [default: 50].
    #[arg(long)]
    tau: Option<usize>,
    /// Rewrite calls per response [default: 5].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Replace responses still over the threshold with the abstention text (default).
    #[arg(long, overrides_with = "no_abstain")]
    abstain: bool,
    #[arg(long, overrides_with = "abstain")]
    no_abstain: bool,
    /// Name the longest quote in the rewrite prompt, or not [default: quote].
    #[arg(long, value_enum)]
    guidance: Option<GuidanceArg>,
    /// Rewriter backend [default: mock].
    #[arg(long, value_enum)]
    rewriter: Option<RewriterKind>,
    /// TOML file with the HTTP client settings; falls back to [http] in --config.
    #[arg(long)]
    http_config: Option<PathBuf>,
    /// Generate each response from its "prompt" field with the HTTP client first.
    #[arg(long)]
    generate: bool,
    /// Include every rewrite round in the output.
    #[arg(long)]
    trace: bool,
    /// Concurrent HTTP calls [default: 4].
    #[arg(long)]
    max_inflight: Option<usize>,
    /// Extra attempts per example after a rewriter failure [default: 0].
    #[arg(long)]
    retries: Option<u32>,
    /// Failed examples tolerated before exiting with status 4 [default: 0].
    #[arg(long)]
    max_failures: Option<usize>,
    /// Run the loop once per threshold in --taus and print a summary table.
    #[arg(long)]
    sweep: bool,
    /// Thresholds for --sweep.
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250,300")]
    taus: Vec<usize>,
    /// Sketch used to measure residual long quotes in --sweep (e.g. the n100 file).
    #[arg(long)]
    metric_sketch: Option<PathBuf>,
    /// Write headerless "tau,mean_iterations,r_gt_q" rows for --sweep.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Record {
    id: serde_json::Value,
    #[serde(default, alias = "response")]
    text: Option<String>,
    #[serde(default)]
    prompt: Option<String>,
}

#[derive(Serialize)]
struct OutputLine<'a> {
    id: serde_json::Value,
    #[serde(flatten)]
    body: OutputBody<'a>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum OutputBody<'a> {
    Done {
        final_text: String,
        status: ScrubStatus,
        iterations_used: usize,
        residual_max_quote_len: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        initial_response: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        trace: Option<&'a [quotescrub_core::scrubber::ScrubIteration]>,
    },
    Failed {
        status: &'static str,
        error: String,
        attempts: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        partial: Option<Box<ScrubOutcome>>,
    },
}

#[derive(Debug, Serialize)]
struct Resolved {
    sketch: PathBuf,
    input: PathBuf,
    scrub: ScrubConfig,
    rewriter: RewriterKind,
    generate: bool,
    http: Option<HttpClientConfig>,
    max_inflight: usize,
    retries: u32,
    max_failures: usize,
    threads: usize,
    sweep: Option<Vec<usize>>,
}

fn parse_enum<T: ValueEnum>(value: Option<&String>, what: &str) -> CliResult<Option<T>> {
    value
        .map(|v| T::from_str(v, true).map_err(|_| error::usage(format!("invalid {what} {v:?} in config"))))
        .transpose()
}

fn resolve(args: &Args, file: &FileConfig) -> CliResult<Resolved> {
    let f = &file.scrub;
    let defaults = ScrubConfig::default();
    let abstain = if args.abstain {
        Some(true)
    } else if args.no_abstain {
        Some(false)
    } else {
        None
    };
    let guidance = pick(args.guidance, parse_enum(f.guidance.as_ref(), "guidance")?, GuidanceArg::Quote);
    let rewriter = pick(args.rewriter, parse_enum(f.rewriter.as_ref(), "rewriter")?, RewriterKind::Mock);
    let scrub = ScrubConfig {
        tau: pick(args.tau, f.tau, defaults.tau),
        max_iterations: pick(args.max_iters, f.max_iters, defaults.max_iterations),
        abstain: pick(abstain, f.abstain, defaults.abstain),
        guidance: match guidance {
            GuidanceArg::Quote => Guidance::QuoteGuided,
            GuidanceArg::None => Guidance::Unguided,
        },
        rewrite_template: f.rewrite_template.clone().unwrap_or(defaults.rewrite_template),
        unguided_template: f.unguided_template.clone(),
        abstention_text: f.abstention_text.clone().unwrap_or(defaults.abstention_text),
    };
    if scrub.tau == 0 {
        return Err(error::usage("--tau must be positive"));
    }
    scrub.active_template().or_kind(Kind::Usage, || "invalid rewrite template".into())?;

    let needs_http = rewriter == RewriterKind::Http || args.generate;
    let http = match (&args.http_config, needs_http) {
        (_, false) => None,
        (Some(path), true) => Some(config::load_http(path)?),
        (None, true) => Some(file.http.clone().ok_or_else(|| {
            error::usage("the HTTP client needs --http-config or an [http] section in --config")
        })?),
    };
    let max_inflight = pick(args.max_inflight, f.max_inflight, 4);
    if max_inflight == 0 {
        return Err(error::usage("--max-inflight must be at least 1"));
    }
    if args.sweep && args.metric_sketch.is_none() {
        return Err(error::usage("--sweep needs --metric-sketch"));
    }
    if args.plot_data.is_some() && !args.sweep {
        return Err(error::usage("--plot-data needs --sweep"));
    }
    if args.sweep && (args.taus.is_empty() || args.taus.contains(&0)) {
        return Err(error::usage("--taus must list positive thresholds"));
    }
    Ok(Resolved {
        sketch: args.sketch.clone(),
        input: args.input.clone(),
        scrub,
        rewriter,
        generate: args.generate,
        http,
        max_inflight,
        retries: pick(args.retries, f.retries, 0),
        max_failures: pick(args.max_failures, f.max_failures, 0),
        threads: rayon::current_num_threads(),
        sweep: args.sweep.then(|| args.taus.clone()),
    })
}

fn http_client(cfg: &HttpClientConfig, max_inflight: usize) -> CliResult<Arc<dyn CompletionClient>> {
    let client = HttpCompletionClient::new(cfg.clone()).or_kind(Kind::Usage, || "configuring HTTP client".into())?;
    Ok(Arc::new(InflightLimit::new(client, max_inflight)))
}

fn build_rewriter(r: &Resolved, sketch: &Arc<quotescrub_core::BloomSketch>) -> CliResult<Arc<dyn CompletionClient>> {
    Ok(match r.rewriter {
        RewriterKind::Mock => Arc::new(SentinelRewriter::new(sketch.clone(), SentinelMode::AllQuotes)),
        RewriterKind::MockLongest => Arc::new(SentinelRewriter::new(sketch.clone(), SentinelMode::LongestOnly)),
        RewriterKind::Identity => Arc::new(IdentityClient),
        RewriterKind::Http => http_client(r.http.as_ref().expect("resolved with http"), r.max_inflight)?,
    })
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let started = manifest::now_unix();
    let resolved = resolve(&args, file)?;
    let sketch = Arc::new(io::load_sketch(&args.sketch)?);
    let rewriter = build_rewriter(&resolved, &sketch)?;
    let generator = match (resolved.generate, &resolved.http) {
        (true, Some(cfg)) => Some(http_client(cfg, resolved.max_inflight)?),
        _ => None,
    };
    let scrubber = Scrubber::new(&sketch, resolved.scrub.clone()).map_err(|e| match e {
        ScrubError::AbstentionNotClean(_) | ScrubError::Template(_) => CliError {
            kind: Kind::Usage,
            source: e.into(),
        },
        other => CliError {
            kind: Kind::Format,
            source: other.into(),
        },
    })?;

    let mut m = RunManifest::new("scrub", &resolved, started);
    m.nondeterministic = resolved.rewriter == RewriterKind::Http || resolved.generate;
    m.inputs = manifest::digests(std::slice::from_ref(&args.input))?;
    let mut sketch_paths = vec![args.sketch.clone()];

    if let Some(taus) = &resolved.sweep {
        let metric_path = args.metric_sketch.clone().expect("checked in resolve");
        let metric = io::load_sketch(&metric_path)?;
        sketch_paths.push(metric_path);
        run_sweep(&args, taus, &scrubber, &metric, rewriter.as_ref())?;
        if let Some(p) = &args.plot_data {
            m.outputs = manifest::digests(std::slice::from_ref(p))?;
        }
    } else {
        let batch = run_batch(&args, &resolved, &scrubber, rewriter.as_ref(), generator.as_deref())?;
        if let Some(p) = &args.out {
            m.outputs = manifest::digests(std::slice::from_ref(p))?;
        }
        m.sketches = manifest::digests(&sketch_paths)?;
        if let Some(path) = manifest_target(&args) {
            m.write(&path)?;
        }
        if batch.failures > resolved.max_failures {
            return Err(error::remote(format!(
                "{} examples failed (tolerated: {})",
                batch.failures, resolved.max_failures
            )));
        }
        if batch.malformed > 0 {
            return Err(error::format(format!("{} malformed input lines", batch.malformed)));
        }
        return Ok(());
    }
    m.sketches = manifest::digests(&sketch_paths)?;
    if let Some(path) = manifest_target(&args) {
        m.write(&path)?;
    }
    Ok(())
}

fn manifest_target(args: &Args) -> Option<PathBuf> {
    args.manifest
        .clone()
        .or_else(|| args.out.as_deref().map(manifest::manifest_path_for))
        .or_else(|| args.plot_data.as_deref().map(manifest::manifest_path_for))
}

fn scrub_one(
    scrubber: &Scrubber<'_>,
    rec: &Record,
    rewriter: &dyn CompletionClient,
    generator: Option<&dyn CompletionClient>,
) -> Result<ScrubOutcome, ScrubError> {
    match (generator, &rec.prompt, &rec.text) {
        (Some(g), Some(prompt), _) => scrubber.generate_then_scrub(prompt, g, rewriter),
        (_, _, Some(text)) => scrubber.scrub(text, rewriter),
        _ => unreachable!("records without text are rejected before scrubbing"),
    }
}

struct Failure {
    error: String,
    attempts: u32,
    partial: Option<Box<ScrubOutcome>>,
}

struct BatchResult {
    failures: usize,
    malformed: usize,
}

/// Scrubs every line, retrying failed examples. Malformed lines get an
/// error record and the batch moves on.
fn run_batch(
    args: &Args,
    r: &Resolved,
    scrubber: &Scrubber<'_>,
    rewriter: &dyn CompletionClient,
    generator: Option<&dyn CompletionClient>,
) -> CliResult<BatchResult> {
    let mut out = io::create_output(args.out.as_deref())?;
    let failed = AtomicUsize::new(0);
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    let mut malformed = 0usize;
    io::process_lines(
        &args.input,
        |line_no, line| -> Result<(serde_json::Value, Result<ScrubOutcome, Failure>), String> {
            let rec: Record = serde_json::from_str(line).map_err(|e| format!("line {line_no}: {e}"))?;
            if rec.text.is_none() && !(generator.is_some() && rec.prompt.is_some()) {
                return Err(format!("line {line_no}: record has no \"text\" to scrub"));
            }
            let mut attempts = 0;
            loop {
                attempts += 1;
                match scrub_one(scrubber, &rec, rewriter, generator) {
                    Ok(outcome) => return Ok((rec.id, Ok(outcome))),
                    Err(e) if attempts <= r.retries => {
                        log::warn!("example {}: attempt {attempts} failed: {e}", rec.id);
                    }
                    Err(e) => {
                        failed.fetch_add(1, Ordering::Relaxed);
                        let partial = match e {
                            ScrubError::Rewrite { ref partial, .. } => Some(partial.clone()),
                            _ => None,
                        };
                        let failure = Failure {
                            error: format!("{:#}", anyhow::Error::new(e)),
                            attempts,
                            partial,
                        };
                        return Ok((rec.id, Err(failure)));
                    }
                }
            }
        },
        |result| {
            let (id, outcome) = match result {
                Ok(r) => r,
                Err(msg) => {
                    malformed += 1;
                    return io::write_json_line(&mut out, &serde_json::json!({ "error": msg }));
                }
            };
            let body = match &outcome {
                Ok(o) => {
                    let status = serde_json::to_value(o.status).ok().and_then(|v| v.as_str().map(String::from));
                    *counts.entry(status.unwrap_or_default()).or_default() += 1;
                    OutputBody::Done {
                        final_text: o.final_text.clone(),
                        status: o.status,
                        iterations_used: o.iterations_used,
                        residual_max_quote_len: o.residual_max_quote_len,
                        initial_response: o.initial_response.clone(),
                        trace: args.trace.then_some(o.trace.as_slice()),
                    }
                }
                Err(f) => {
                    *counts.entry("failed".into()).or_default() += 1;
                    OutputBody::Failed {
                        status: "failed",
                        error: f.error.clone(),
                        attempts: f.attempts,
                        partial: if args.trace { f.partial.clone() } else { None },
                    }
                }
            };
            io::write_json_line(&mut out, &OutputLine { id, body })
        },
    )?;
    io::finish(&mut out)?;
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("scrub summary: {} malformed={malformed}", summary.join(" "));
    Ok(BatchResult {
        failures: failed.into_inner(),
        malformed,
    })
}

fn run_sweep(
    args: &Args,
    taus: &[usize],
    scrubber: &Scrubber<'_>,
    metric: &quotescrub_core::BloomSketch,
    rewriter: &dyn CompletionClient,
) -> CliResult<()> {
    // every threshold needs every response, so the sweep holds the input in memory
    let mut responses = Vec::new();
    io::process_lines(
        &args.input,
        |line_no, line| {
            serde_json::from_str::<Record>(line)
                .map_err(|e| format!("line {line_no}: {e}"))
                .and_then(|r| r.text.ok_or_else(|| format!("line {line_no}: no \"text\" field")))
        },
        |text| {
            responses.push(text.map_err(error::format)?);
            Ok(())
        },
    )?;
    let points = tau_sweep(&responses, scrubber.sketch(), metric, taus, scrubber.config(), rewriter)
        .map_err(|e| match e {
            ScrubError::Rewrite { .. } | ScrubError::Generation(_) => CliError {
                kind: Kind::Remote,
                source: e.into(),
            },
            other => CliError {
                kind: Kind::Usage,
                source: other.into(),
            },
        })?;
    let mut out = io::create_output(args.out.as_deref())?;
    let table = |out: &mut dyn std::io::Write| -> std::io::Result<()> {
        writeln!(out, "tau\tmean_iterations\tr_gt_q_{}", metric.ngram_width())?;
        for p in &points {
            writeln!(out, "{}\t{:.4}\t{:.4}", p.tau, p.mean_iterations, p.r_gt_q)?;
        }
        Ok(())
    };
    table(&mut out).or_kind(Kind::Io, || "writing sweep table".into())?;
    io::finish(&mut out)?;
    if let Some(path) = &args.plot_data {
        write_plot_data(path, &points)?;
    }
    Ok(())
}

fn write_plot_data(path: &Path, points: &[quotescrub_core::scrubber::SweepPoint]) -> CliResult<()> {
    let body: String = points
        .iter()
        .map(|p| format!("{},{},{}\n", p.tau, p.mean_iterations, p.r_gt_q))
        .collect();
    std::fs::write(path, body).or_kind(Kind::Io, || format!("writing {}", path.display()))
}
