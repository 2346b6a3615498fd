use std::path::PathBuf;

use quotescrub_core::indexer::{self, IndexConfig, JsonlCorpus};
use serde::Serialize;

use crate::config::{pick, FileConfig};
use crate::error::{self, index_kind, CliError, CliResult, Classify, Kind};
use crate::manifest::{self, RunManifest};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSONL corpus, one {"id", "text"} object per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Extraction n-gram width in characters [default: 25].
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated widths of the metric sketches [default: 50,100].
    #[arg(long, value_delimiter = ',')]
    metric_widths: Option<Vec<usize>>,
    /// Target false-positive rate, in (0, 1) [default: 0.001].
    #[arg(long)]
    fpr: Option<f64>,
    /// Hash seed stored in every sketch [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Size every sketch for this many items instead of counting windows.
    #[arg(long)]
    expected_items: Option<u64>,
    /// Output stem; writes <stem>.n<width>.bsf and <stem>.manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Resolved<'a> {
    corpus: &'a PathBuf,
    out: &'a PathBuf,
    index: &'a IndexConfig,
    threads: usize,
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let started = manifest::now_unix();
    let f = &file.index;
    let cfg = IndexConfig {
        ngram_width: pick(args.n, f.n, 25),
        metric_widths: pick(args.metric_widths.clone(), f.metric_widths.clone(), vec![50, 100]),
        target_fpr: pick(args.fpr, f.fpr, 0.001),
        seed: pick(args.seed, f.seed, 0),
        expected_items: args.expected_items.or(f.expected_items),
    };
    if !(cfg.target_fpr > 0.0 && cfg.target_fpr < 1.0) {
        return Err(error::usage(format!("--fpr must lie in (0, 1), got {}", cfg.target_fpr)));
    }
    if cfg.expected_items == Some(0) {
        return Err(error::usage("--expected-items must be positive"));
    }
    cfg.validate().or_kind(Kind::Usage, || "invalid index settings".into())?;
    if !args.corpus.is_file() {
        return Err(CliError {
            kind: Kind::Io,
            source: anyhow::anyhow!("cannot read corpus {}", args.corpus.display()),
        });
    }

    let set = indexer::build_indexes(&JsonlCorpus::new(&args.corpus), &cfg).map_err(|e| CliError {
        kind: index_kind(&e),
        source: anyhow::Error::new(e).context("building sketches"),
    })?;
    let written = set
        .write_files(&args.out)
        .or_kind(Kind::Io, || format!("writing sketches under {}", args.out.display()))?;

    println!(
        "documents: {} (duplicate ids: {})",
        set.stats.documents, set.stats.duplicate_ids
    );
    for (path, sk) in set.files(&args.out) {
        println!(
            "{}: n={} m={} k={} windows={} load={:.4} est_fpr={:.6}",
            path.display(),
            sk.ngram_width(),
            sk.bit_count(),
            sk.hash_count(),
            sk.inserted_count(),
            sk.load(),
            sk.load().powi(sk.hash_count() as i32),
        );
    }

    let resolved = Resolved {
        corpus: &args.corpus,
        out: &args.out,
        index: &cfg,
        threads: rayon::current_num_threads(),
    };
    let mut m = RunManifest::new("build-index", &resolved, started);
    m.inputs = manifest::digests(std::slice::from_ref(&args.corpus))?;
    m.sketches = manifest::digests(&written)?;
    let mut path = args.out.as_os_str().to_owned();
    path.push(".manifest.json");
    m.write(&PathBuf::from(path))
}
