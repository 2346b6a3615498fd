use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use quotescrub_core::metrics::{evaluate, EvalOptions, LcsMode, MetricError, MetricReport};
use quotescrub_core::{BloomSketch, EvalExample};
use serde::Serialize;

use crate::config::{pick, FileConfig};
use crate::error::{self, CliError, CliResult, Classify, Kind};
use crate::io;
use crate::manifest::{self, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LcsArg {
    Subsequence,
    Substring,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSONL of {"id", "prompt", "ground_truth", "response", "qa"?} records.
    #[arg(long)]
    eval_file: PathBuf,
    /// Sketches for %R>Q; one threshold per sketch width. Comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    metric_sketches: Vec<PathBuf>,
    /// A second method's eval file, same ids in the same order, for win rates.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Label of the --eval-file method [default: file stem].
    #[arg(long)]
    name: Option<String>,
    /// Label of the --compare method [default: file stem].
    #[arg(long)]
    compare_name: Option<String>,
    /// Report JSON [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-example metric values as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Manifest path [default: <out>.manifest.json when --out is given].
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Shortest block counted by ACS, in words [default: 3].
    #[arg(long)]
    acs_min_block: Option<usize>,
    /// MinHash permutations [default: 128].
    #[arg(long)]
    minhash_permutations: Option<usize>,
    /// MinHash seed [default: 0].
    #[arg(long)]
    minhash_seed: Option<u64>,
    /// Longest common subsequence or substring [default: subsequence].
    #[arg(long, value_enum)]
    lcs_mode: Option<LcsArg>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    eval_file: &'a Path,
    compare: Option<&'a Path>,
    metric_sketches: &'a [PathBuf],
    options: &'a EvalOptions,
    threads: usize,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "method".into())
}

fn metric_error(e: MetricError, what: &str) -> CliError {
    let kind = match e {
        MetricError::MissingMetric(_) => Kind::Usage,
        _ => Kind::Format,
    };
    CliError {
        kind,
        source: anyhow::Error::new(e).context(what.to_owned()),
    }
}

fn options(args: &Args, file: &FileConfig) -> CliResult<EvalOptions> {
    let f = &file.eval;
    let d = EvalOptions::default();
    let file_mode = f
        .lcs_mode
        .as_ref()
        .map(|v| LcsArg::from_str(v, true).map_err(|_| error::usage(format!("invalid lcs_mode {v:?} in config"))))
        .transpose()?;
    let opts = EvalOptions {
        acs_min_block: pick(args.acs_min_block, f.acs_min_block, d.acs_min_block),
        minhash_permutations: pick(args.minhash_permutations, f.minhash_permutations, d.minhash_permutations),
        minhash_seed: pick(args.minhash_seed, f.minhash_seed, d.minhash_seed),
        lcs_mode: match pick(args.lcs_mode, file_mode, LcsArg::Subsequence) {
            LcsArg::Subsequence => LcsMode::Subsequence,
            LcsArg::Substring => LcsMode::Substring,
        },
    };
    if opts.acs_min_block == 0 || opts.minhash_permutations == 0 {
        return Err(error::usage("--acs-min-block and --minhash-permutations must be positive"));
    }
    Ok(opts)
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let started = manifest::now_unix();
    let opts = options(&args, file)?;
    let sketches = args
        .metric_sketches
        .iter()
        .map(|p| io::load_sketch(p))
        .collect::<CliResult<Vec<BloomSketch>>>()?;
    let refs: Vec<&BloomSketch> = sketches.iter().collect();

    let examples: Vec<EvalExample> = io::read_jsonl(&args.eval_file)?;
    let mut report: MetricReport =
        evaluate(&examples, &refs, &opts).map_err(|e| metric_error(e, "evaluating --eval-file"))?;

    if let Some(other_path) = &args.compare {
        let other: Vec<EvalExample> = io::read_jsonl(other_path)?;
        let other_report =
            evaluate(&other, &refs, &opts).map_err(|e| metric_error(e, "evaluating --compare"))?;
        let name_a = args.name.clone().unwrap_or_else(|| stem(&args.eval_file));
        let name_b = args.compare_name.clone().unwrap_or_else(|| stem(other_path));
        report
            .add_comparison(&name_a, &name_b, &other_report.per_example)
            .map_err(|e| metric_error(e, "comparing methods"))?;
    }

    let mut out = io::create_output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report).or_kind(Kind::Io, || "writing report".into())?;
    writeln!(out).or_kind(Kind::Io, || "writing report".into())?;
    io::finish(&mut out)?;

    let mut outputs = args.out.iter().cloned().collect::<Vec<_>>();
    if let Some(csv) = &args.csv {
        let f = std::fs::File::create(csv).or_kind(Kind::Io, || format!("creating {}", csv.display()))?;
        report
            .per_example
            .write_csv(std::io::BufWriter::new(f))
            .or_kind(Kind::Io, || format!("writing {}", csv.display()))?;
        outputs.push(csv.clone());
    }

    if let Some(path) = args.manifest.clone().or_else(|| args.out.as_deref().map(manifest::manifest_path_for)) {
        let resolved = Resolved {
            eval_file: &args.eval_file,
            compare: args.compare.as_deref(),
            metric_sketches: &args.metric_sketches,
            options: &opts,
            threads: rayon::current_num_threads(),
        };
        let mut m = RunManifest::new("eval", &resolved, started);
        let mut inputs = vec![args.eval_file.clone()];
        inputs.extend(args.compare.iter().cloned());
        m.inputs = manifest::digests(&inputs)?;
        m.sketches = manifest::digests(&args.metric_sketches)?;
        m.outputs = manifest::digests(&outputs)?;
        m.write(&path)?;
    }
    Ok(())
}
