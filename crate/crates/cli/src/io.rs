//! Line-oriented input and output helpers.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use quotescrub_core::BloomSketch;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{sketch_kind, CliError, CliResult, Classify, Kind};

/// Lines handed to the worker pool at a time. Output order follows input order.
pub const BATCH_LINES: usize = 512;

pub fn open_lines(path: &Path) -> CliResult<io::Lines<BufReader<File>>> {
    let file = File::open(path).or_kind(Kind::Io, || format!("opening {}", path.display()))?;
    Ok(BufReader::new(file).lines())
}

/// Output file, or stdout when `path` is `None`.
pub fn create_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).or_kind(Kind::Io, || format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json_line<W: Write + ?Sized>(out: &mut W, value: &impl Serialize) -> CliResult<()> {
    serde_json::to_writer(&mut *out, value).or_kind(Kind::Io, || "writing output".into())?;
    out.write_all(b"\n").or_kind(Kind::Io, || "writing output".into())
}

pub fn load_sketch(path: &Path) -> CliResult<BloomSketch> {
    quotescrub_core::indexer::read_sketch(path).map_err(|e| CliError {
        kind: sketch_kind(&e),
        source: anyhow::Error::new(e).context(format!("reading sketch {}", path.display())),
    })
}

/// Streams non-blank lines of `input` through `work` in parallel batches and
/// hands each result, in input order, to `emit`. Line numbers are 1-based.
pub fn process_lines<T, F, E>(input: &Path, work: F, mut emit: E) -> CliResult<()>
where
    T: Send,
    F: Fn(usize, &str) -> T + Sync,
    E: FnMut(T) -> CliResult<()>,
{
    let mut batch: Vec<(usize, String)> = Vec::with_capacity(BATCH_LINES);
    let mut flush = |batch: &mut Vec<(usize, String)>| -> CliResult<()> {
        let results: Vec<T> = batch.par_iter().map(|(n, line)| work(*n, line)).collect();
        batch.clear();
        results.into_iter().try_for_each(&mut emit)
    };
    for (idx, line) in open_lines(input)?.enumerate() {
        let line = line.or_kind(Kind::Io, || format!("reading {}", input.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        batch.push((idx + 1, line));
        if batch.len() == BATCH_LINES {
            flush(&mut batch)?;
        }
    }
    if !batch.is_empty() {
        flush(&mut batch)?;
    }
    Ok(())
}

/// Parses a whole JSONL file; any bad line is a format error.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in open_lines(path)?.enumerate() {
        let line = line.or_kind(Kind::Io, || format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .or_kind(Kind::Format, || format!("{}:{}: invalid record", path.display(), idx + 1))?,
        );
    }
    Ok(out)
}

pub fn finish<W: Write + ?Sized>(out: &mut W) -> CliResult<()> {
    out.flush().or_kind(Kind::Io, || "flushing output".into())
}
