//! Corpus indexing: streams documents, normalizes them, and fills the
//! extraction sketch and the metric sketches in one pass.
//!
//! By default the build makes two passes over the corpus, the first only
//! counting windows so the filters can be sized for their real load.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sketch::{BloomSketch, SketchError, SketchParams};
use crate::textnorm::normalize;

/// Documents handed to the workers at a time.
const BATCH_DOCS: usize = 4096;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("reading corpus {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error("invalid index configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub id: String,
    pub text: String,
}

impl CorpusDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        CorpusDocument {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Width of the extraction filter's n-grams.
    pub ngram_width: usize,
    /// Widths of the metric filters.
    pub metric_widths: Vec<usize>,
    pub target_fpr: f64,
    pub seed: u64,
    /// Skips the counting pass and sizes every filter for this many keys.
    pub expected_items: Option<u64>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            ngram_width: 25,
            metric_widths: vec![50, 100],
            target_fpr: 0.001,
            seed: 0,
            expected_items: None,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.ngram_width == 0 || self.metric_widths.contains(&0) {
            return Err(IndexError::Config("n-gram widths must be positive".into()));
        }
        if self.ngram_width > u32::MAX as usize || self.metric_widths.iter().any(|&w| w > u32::MAX as usize) {
            return Err(IndexError::Config("n-gram width too large".into()));
        }
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(IndexError::Config(format!(
                "target false-positive rate {} is outside (0, 1)",
                self.target_fpr
            )));
        }
        if self.expected_items == Some(0) {
            return Err(IndexError::Config("expected item count must be positive".into()));
        }
        Ok(())
    }
}

pub type DocStream<'a> = Box<dyn Iterator<Item = Result<CorpusDocument, IndexError>> + 'a>;

/// Something that can be read as a sequence of documents, possibly twice.
pub trait CorpusSource {
    fn documents(&self) -> Result<DocStream<'_>, IndexError>;
}

impl CorpusSource for [CorpusDocument] {
    fn documents(&self) -> Result<DocStream<'_>, IndexError> {
        Ok(Box::new(self.iter().cloned().map(Ok)))
    }
}

impl CorpusSource for Vec<CorpusDocument> {
    fn documents(&self) -> Result<DocStream<'_>, IndexError> {
        self.as_slice().documents()
    }
}

/// A JSON-lines corpus file: one `{"id": ..., "text": ...}` object per line.
#[derive(Debug, Clone)]
pub struct JsonlCorpus {
    path: PathBuf,
}

impl JsonlCorpus {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        JsonlCorpus { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl CorpusSource for JsonlCorpus {
    fn documents(&self) -> Result<DocStream<'_>, IndexError> {
        let io_err = |source| IndexError::Io {
            path: self.path.clone(),
            source,
        };
        let reader = BufReader::new(File::open(&self.path).map_err(io_err)?);
        let stream = reader
            .lines()
            .enumerate()
            .filter_map(move |(idx, line)| {
                let line = match line {
                    Ok(line) => line,
                    Err(e) => return Some(Err(io_err(e))),
                };
                if line.trim().is_empty() {
                    return None;
                }
                let parsed = serde_json::from_str::<CorpusDocument>(&line)
                    .map_err(|e| e.to_string())
                    .and_then(|doc| {
                        if doc.id.is_empty() {
                            Err("document id is empty".to_owned())
                        } else {
                            Ok(doc)
                        }
                    });
                Some(parsed.map_err(|message| IndexError::Format {
                    path: self.path.clone(),
                    line: idx + 1,
                    message,
                }))
            });
        Ok(Box::new(stream))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub documents: u64,
    pub duplicate_ids: u64,
    /// Windows inserted per width.
    pub ngrams: BTreeMap<usize, u64>,
}

/// The extraction sketch plus one metric sketch per configured width.
#[derive(Debug, Clone)]
pub struct IndexSet {
    pub extraction: BloomSketch,
    pub metric: BTreeMap<usize, BloomSketch>,
    pub stats: IndexStats,
}

impl IndexSet {
    /// Every sketch with its output file name under `stem`.
    pub fn files(&self, stem: &Path) -> Vec<(PathBuf, &BloomSketch)> {
        let mut out = vec![(
            sketch_file_name(stem, self.extraction.ngram_width()),
            &self.extraction,
        )];
        for (&width, sk) in &self.metric {
            if width != self.extraction.ngram_width() {
                out.push((sketch_file_name(stem, width), sk));
            }
        }
        out
    }

    /// Writes `<stem>.n<width>.bsf` for every sketch.
    pub fn write_files(&self, stem: &Path) -> io::Result<Vec<PathBuf>> {
        self.files(stem)
            .into_iter()
            .map(|(path, sk)| write_sketch(&path, sk).map(|_| path))
            .collect()
    }
}

/// `<stem>.n<width>.bsf`
pub fn sketch_file_name(stem: &Path, width: usize) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(format!(".n{width}.bsf"));
    PathBuf::from(name)
}

pub fn write_sketch(path: &Path, sketch: &BloomSketch) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    sketch.write_to(&mut w)?;
    w.flush()
}

pub fn read_sketch(path: &Path) -> Result<BloomSketch, SketchError> {
    BloomSketch::read_from(BufReader::new(File::open(path)?))
}

/// Window counts per width over the whole corpus. Counts windows, not
/// distinct windows, so the result bounds the distinct key count from above.
pub fn count_ngrams<S: CorpusSource + ?Sized>(
    source: &S,
    widths: &[usize],
) -> Result<BTreeMap<usize, u64>, IndexError> {
    let mut counts: BTreeMap<usize, u64> = widths.iter().map(|&w| (w, 0)).collect();
    for doc in source.documents()? {
        let nt = normalize(&doc?.text);
        for (&w, c) in counts.iter_mut() {
            *c += nt.ngram_count(w) as u64;
        }
    }
    Ok(counts)
}

fn all_widths(cfg: &IndexConfig) -> Vec<usize> {
    let mut widths = vec![cfg.ngram_width];
    widths.extend(&cfg.metric_widths);
    widths.sort_unstable();
    widths.dedup();
    widths
}

/// Sizes one sketch per distinct width.
pub fn plan_sketches<S: CorpusSource + ?Sized>(
    source: &S,
    cfg: &IndexConfig,
) -> Result<BTreeMap<usize, SketchParams>, IndexError> {
    cfg.validate()?;
    let widths = all_widths(cfg);
    let loads = match cfg.expected_items {
        Some(items) => widths.iter().map(|&w| (w, items)).collect(),
        None => count_ngrams(source, &widths)?,
    };
    loads
        .into_iter()
        .map(|(w, items)| {
            SketchParams::plan(items.max(1), cfg.target_fpr, w as u32, cfg.seed)
                .map(|p| (w, p))
                .map_err(IndexError::from)
        })
        .collect()
}

fn index_batch(sketches: &mut [BloomSketch], docs: &[CorpusDocument]) {
    for doc in docs {
        let nt = normalize(&doc.text);
        for sk in sketches.iter_mut() {
            let width = sk.ngram_width();
            for (_, window) in nt.char_ngrams(width) {
                sk.insert(window.as_bytes());
            }
        }
    }
}

/// Fills pre-planned sketches from the corpus. Each rayon worker owns a
/// private copy of every sketch; the copies are merged at the end.
pub fn fill_sketches<S: CorpusSource + ?Sized>(
    source: &S,
    params: &BTreeMap<usize, SketchParams>,
) -> Result<(BTreeMap<usize, BloomSketch>, IndexStats), IndexError> {
    let empty = params
        .values()
        .map(|&p| BloomSketch::new(p))
        .collect::<Result<Vec<_>, _>>()?;
    let workers = rayon::current_num_threads().max(1);
    let mut private: Vec<Vec<BloomSketch>> = vec![empty.clone(); workers];

    let mut stats = IndexStats::default();
    let mut seen = HashSet::new();
    let mut batch = Vec::with_capacity(BATCH_DOCS);
    let flush = |batch: &mut Vec<CorpusDocument>, private: &mut Vec<Vec<BloomSketch>>| {
        let chunk = batch.len().div_ceil(workers).max(1);
        private
            .par_iter_mut()
            .zip(batch.par_chunks(chunk))
            .for_each(|(sketches, docs)| index_batch(sketches, docs));
        batch.clear();
    };

    for doc in source.documents()? {
        let doc = doc?;
        stats.documents += 1;
        if !seen.insert(doc.id.clone()) {
            stats.duplicate_ids += 1;
            log::warn!("duplicate document id {:?}", doc.id);
        }
        batch.push(doc);
        if batch.len() == BATCH_DOCS {
            flush(&mut batch, &mut private);
        }
    }
    if !batch.is_empty() {
        flush(&mut batch, &mut private);
    }

    let mut merged = empty;
    for sketches in &private {
        for (dst, src) in merged.iter_mut().zip(sketches) {
            dst.merge_from(src)?;
        }
    }
    for sk in &merged {
        stats.ngrams.insert(sk.ngram_width(), sk.inserted_count());
    }
    let sketches = params.keys().copied().zip(merged).collect();
    Ok((sketches, stats))
}

/// Builds the extraction sketch and all metric sketches.
pub fn build_indexes<S: CorpusSource + ?Sized>(
    source: &S,
    cfg: &IndexConfig,
) -> Result<IndexSet, IndexError> {
    let params = plan_sketches(source, cfg)?;
    let (mut sketches, stats) = fill_sketches(source, &params)?;
    let metric = cfg
        .metric_widths
        .iter()
        .map(|w| (*w, sketches[w].clone()))
        .collect();
    let extraction = sketches
        .remove(&cfg.ngram_width)
        .expect("extraction width is always planned");
    Ok(IndexSet {
        extraction,
        metric,
        stats,
    })
}

/// Sketch of every width-`n` window in the corpus.
pub fn build_extraction_index<S: CorpusSource + ?Sized>(
    source: &S,
    cfg: &IndexConfig,
) -> Result<BloomSketch, IndexError> {
    let cfg = IndexConfig {
        metric_widths: Vec::new(),
        ..cfg.clone()
    };
    Ok(build_indexes(source, &cfg)?.extraction)
}

/// One sketch per metric width.
pub fn build_metric_indexes<S: CorpusSource + ?Sized>(
    source: &S,
    cfg: &IndexConfig,
) -> Result<BTreeMap<usize, BloomSketch>, IndexError> {
    cfg.validate()?;
    let mut widths = cfg.metric_widths.clone();
    widths.sort_unstable();
    widths.dedup();
    let loads = match cfg.expected_items {
        Some(items) => widths.iter().map(|&w| (w, items)).collect(),
        None => count_ngrams(source, &widths)?,
    };
    let params = loads
        .into_iter()
        .map(|(w, items)| {
            SketchParams::plan(items.max(1), cfg.target_fpr, w as u32, cfg.seed).map(|p| (w, p))
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    Ok(fill_sketches(source, &params)?.0)
}
