use std::path::PathBuf;

use quotescrub_core::extractor::{extract_quotes, max_quote_len};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::io;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Extraction sketch (.bsf).
    #[arg(long)]
    sketch: PathBuf,
    /// JSONL input, one {"id", "text"} object per line.
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Record {
    id: serde_json::Value,
    text: String,
}

#[derive(Serialize)]
struct Quote {
    text: String,
    len: usize,
    orig_start: usize,
    orig_end: usize,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Line {
    Report {
        id: serde_json::Value,
        max_quote_len: usize,
        quotes: Vec<Quote>,
    },
    Error {
        line: usize,
        error: String,
    },
}

pub fn run(args: Args) -> CliResult<()> {
    let sketch = io::load_sketch(&args.sketch)?;
    let mut out = io::create_output(args.out.as_deref())?;
    let mut bad = 0usize;
    io::process_lines(
        &args.input,
        |line_no, line| match serde_json::from_str::<Record>(line) {
            Ok(rec) => {
                let spans = extract_quotes(&sketch, &rec.text);
                Line::Report {
                    id: rec.id,
                    max_quote_len: max_quote_len(&spans),
                    quotes: spans
                        .into_iter()
                        .map(|s| Quote {
                            len: s.length,
                            orig_start: s.orig_start,
                            orig_end: s.orig_end,
                            text: s.text,
                        })
                        .collect(),
                }
            }
            Err(e) => Line::Error {
                line: line_no,
                error: e.to_string(),
            },
        },
        |line| {
            if matches!(line, Line::Error { .. }) {
                bad += 1;
            }
            io::write_json_line(&mut out, &line)
        },
    )?;
    io::finish(&mut out)?;
    if bad > 0 {
        log::warn!("{bad} malformed input lines reported inline");
    }
    Ok(())
}
