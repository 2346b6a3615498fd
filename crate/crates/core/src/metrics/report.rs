use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    acs_word_with, lcs_char_with, lcs_word_with, levenshtein, qa_f1, rouge1, rouge_l, LcsMode,
    MinHasher, DEFAULT_ACS_MIN_BLOCK, DEFAULT_PERMUTATIONS,
};
use crate::extractor::normalized_contains_quote_longer_than;
use crate::sketch::BloomSketch;
use crate::textnorm::normalize;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no examples to evaluate")]
    Empty,
    #[error("example sets differ: {0}")]
    MismatchedExamples(String),
    #[error("metric {0:?} missing from table")]
    MissingMetric(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub gold_answer: String,
    /// The method's answer to `question`; F1 is only computed when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub prompt: String,
    pub ground_truth: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa: Option<QaPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub acs_min_block: usize,
    pub minhash_permutations: usize,
    pub minhash_seed: u64,
    pub lcs_mode: LcsMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            acs_min_block: DEFAULT_ACS_MIN_BLOCK,
            minhash_permutations: DEFAULT_PERMUTATIONS,
            minhash_seed: 0,
            lcs_mode: LcsMode::Subsequence,
        }
    }
}

/// Per-example metric values, one column per metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub ids: Vec<String>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl MetricTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    /// Writes a header row and one row per example.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&String> = self.columns.keys().collect();
        write!(w, "id")?;
        for n in &names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (row, id) in self.ids.iter().enumerate() {
            write!(w, "{}", csv_field(id))?;
            for n in &names {
                let v = self.columns[*n][row];
                if v.is_nan() {
                    write!(w, ",")?;
                } else {
                    write!(w, ",{v}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

/// The reference metrics entering the win rate, with the direction that
/// counts as less infringing.
pub const WIN_RATE_METRICS: [(&str, Direction); 6] = [
    ("rouge1", Direction::LowerIsBetter),
    ("rouge_l", Direction::LowerIsBetter),
    ("lcs_char", Direction::LowerIsBetter),
    ("lcs_word", Direction::LowerIsBetter),
    ("levenshtein", Direction::HigherIsBetter),
    ("minhash", Direction::LowerIsBetter),
];

/// Outcome counts over (metric, example) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinRate {
    pub wins: u64,
    pub ties: u64,
    pub losses: u64,
}

impl WinRate {
    pub fn pairs(&self) -> u64 {
        self.wins + self.ties + self.losses
    }

    /// Wins plus half the ties, over all pairs.
    pub fn value(&self) -> f64 {
        if self.pairs() == 0 {
            return 0.5;
        }
        (2 * self.wins + self.ties) as f64 / (2 * self.pairs()) as f64
    }

    pub fn reversed(&self) -> WinRate {
        WinRate {
            wins: self.losses,
            ties: self.ties,
            losses: self.wins,
        }
    }
}

/// Probability that A beats B on a uniformly drawn (metric, example) pair.
pub fn win_rate(
    a: &MetricTable,
    b: &MetricTable,
    directions: &[(&str, Direction)],
) -> Result<WinRate, MetricError> {
    if a.ids != b.ids {
        return Err(MetricError::MismatchedExamples(format!(
            "{} vs {} examples or different order",
            a.ids.len(),
            b.ids.len()
        )));
    }
    let mut out = WinRate {
        wins: 0,
        ties: 0,
        losses: 0,
    };
    for &(name, dir) in directions {
        let missing = || MetricError::MissingMetric(name.to_owned());
        let (xs, ys) = (a.column(name).ok_or_else(missing)?, b.column(name).ok_or_else(missing)?);
        for (x, y) in xs.iter().zip(ys) {
            let ord = match dir {
                Direction::LowerIsBetter => y.partial_cmp(x),
                Direction::HigherIsBetter => x.partial_cmp(y),
            };
            match ord {
                Some(std::cmp::Ordering::Greater) => out.wins += 1,
                Some(std::cmp::Ordering::Less) => out.losses += 1,
                _ => out.ties += 1,
            }
        }
    }
    Ok(out)
}

/// Fraction of responses holding a corpus quote longer than the sketch width.
/// Can only overestimate the true rate.
pub fn percent_r_gt_q<S: AsRef<str> + Sync>(
    responses: &[S],
    sk_tau: &BloomSketch,
) -> Result<f64, MetricError> {
    if responses.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = responses
        .par_iter()
        .filter(|r| normalized_contains_quote_longer_than(sk_tau, &normalize(r.as_ref())))
        .count();
    Ok(hits as f64 / responses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub max_lcs_char: f64,
    pub max_lcs_word: f64,
    pub max_acs: f64,
    /// Keyed by quote threshold.
    pub r_gt_q: BTreeMap<usize, f64>,
    pub mean_levenshtein: f64,
    pub qa_f1_mean: Option<f64>,
    pub qa_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateEntry {
    pub method_a: String,
    pub method_b: String,
    pub win_rate: f64,
    pub counts: WinRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub examples: usize,
    pub options: EvalOptions,
    pub per_example: MetricTable,
    pub aggregates: Aggregates,
    /// Metrics the win rate is computed over.
    pub win_rate_metrics: Vec<String>,
    pub win_rates: Vec<WinRateEntry>,
}

impl MetricReport {
    /// Adds both directions of the comparison against another method.
    pub fn add_comparison(
        &mut self,
        name_a: &str,
        name_b: &str,
        other: &MetricTable,
    ) -> Result<(), MetricError> {
        let ab = win_rate(&self.per_example, other, &WIN_RATE_METRICS)?;
        let ba = ab.reversed();
        for (x, y, counts) in [(name_a, name_b, ab), (name_b, name_a, ba)] {
            self.win_rates.push(WinRateEntry {
                method_a: x.to_owned(),
                method_b: y.to_owned(),
                win_rate: counts.value(),
                counts,
            });
        }
        Ok(())
    }
}

struct Row {
    values: Vec<(String, f64)>,
}

fn score(ex: &EvalExample, metric: &[(usize, &BloomSketch)], opts: &EvalOptions, mh: &MinHasher) -> Row {
    let (y, g) = (ex.response.as_str(), ex.ground_truth.as_str());
    let mut values = vec![
        ("lcs_char".to_owned(), lcs_char_with(y, g, opts.lcs_mode) as f64),
        ("lcs_word".to_owned(), lcs_word_with(y, g, opts.lcs_mode) as f64),
        ("acs_word".to_owned(), acs_word_with(y, g, opts.acs_min_block) as f64),
        ("levenshtein".to_owned(), levenshtein(y, g) as f64),
        ("rouge1".to_owned(), rouge1(y, g)),
        ("rouge_l".to_owned(), rouge_l(y, g)),
        ("minhash".to_owned(), mh.similarity(&mh.signature(y), &mh.signature(g))),
    ];
    let f1 = ex
        .qa
        .as_ref()
        .and_then(|qa| qa.answer.as_deref().map(|ans| qa_f1(ans, &qa.gold_answer)))
        .unwrap_or(f64::NAN);
    values.push(("qa_f1".to_owned(), f1));
    let nt = normalize(y);
    for &(tau, sk) in metric {
        let hit = normalized_contains_quote_longer_than(sk, &nt);
        values.push((format!("r_gt_q_{tau}"), if hit { 1.0 } else { 0.0 }));
    }
    Row { values }
}

fn column_max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Scores every example and aggregates. `metric_sketches` supplies one
/// %R>Q threshold per sketch, keyed by its width.
pub fn evaluate(
    examples: &[EvalExample],
    metric_sketches: &[&BloomSketch],
    opts: &EvalOptions,
) -> Result<MetricReport, MetricError> {
    if examples.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut ids = std::collections::HashSet::new();
    if let Some(dup) = examples.iter().find(|e| !ids.insert(e.id.as_str())) {
        return Err(MetricError::MismatchedExamples(format!("duplicate id {:?}", dup.id)));
    }
    let metric: Vec<(usize, &BloomSketch)> =
        metric_sketches.iter().map(|s| (s.ngram_width(), *s)).collect();
    let mh = MinHasher::new(opts.minhash_permutations, opts.minhash_seed);
    let rows: Vec<Row> = examples
        .par_iter()
        .map(|ex| score(ex, &metric, opts, &mh))
        .collect();

    let mut table = MetricTable {
        ids: examples.iter().map(|e| e.id.clone()).collect(),
        columns: BTreeMap::new(),
    };
    for row in rows {
        for (name, v) in row.values {
            table.columns.entry(name).or_default().push(v);
        }
    }

    let n = examples.len() as f64;
    let col = |name: &str| table.column(name).expect("column always present");
    let qa: Vec<f64> = col("qa_f1").iter().copied().filter(|v| !v.is_nan()).collect();
    let aggregates = Aggregates {
        max_lcs_char: column_max(col("lcs_char")),
        max_lcs_word: column_max(col("lcs_word")),
        max_acs: column_max(col("acs_word")),
        r_gt_q: metric
            .iter()
            .map(|&(tau, _)| (tau, col(&format!("r_gt_q_{tau}")).iter().sum::<f64>() / n))
            .collect(),
        mean_levenshtein: col("levenshtein").iter().sum::<f64>() / n,
        qa_f1_mean: (!qa.is_empty()).then(|| qa.iter().sum::<f64>() / qa.len() as f64),
        qa_examples: qa.len(),
    };
    Ok(MetricReport {
        examples: examples.len(),
        options: opts.clone(),
        per_example: table,
        aggregates,
        win_rate_metrics: WIN_RATE_METRICS.iter().map(|(m, _)| (*m).to_owned()).collect(),
        win_rates: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(ids: &[&str], cols: &[(&str, &[f64])]) -> MetricTable {
        MetricTable {
            ids: ids.iter().map(|s| s.to_string()).collect(),
            columns: cols.iter().map(|(n, v)| (n.to_string(), v.to_vec())).collect(),
        }
    }

    #[test]
    fn hand_counted_win_rate() {
        let dirs = [("x", Direction::LowerIsBetter), ("y", Direction::HigherIsBetter)];
        let a = table(&["1", "2", "3"], &[("x", &[1.0, 5.0, 2.0]), ("y", &[0.3, 0.3, 0.9])]);
        let b = table(&["1", "2", "3"], &[("x", &[2.0, 5.0, 1.0]), ("y", &[0.1, 0.5, 0.9])]);
        // x: win, tie, loss; y: win, loss, tie  -> (2 + 0.5*2) / 6
        let w = win_rate(&a, &b, &dirs).unwrap();
        assert_eq!((w.wins, w.ties, w.losses), (2, 2, 2));
        assert_eq!(w.value(), 0.5);
        let a2 = table(&["1", "2", "3"], &[("x", &[0.0, 0.0, 0.0]), ("y", &[1.0, 1.0, 0.95])]);
        assert_eq!(win_rate(&a2, &b, &dirs).unwrap().value(), 1.0);
        assert_eq!(win_rate(&a, &a, &dirs).unwrap().value(), 0.5);
    }

    #[test]
    fn win_rate_rejects_mismatch() {
        let dirs = [("x", Direction::LowerIsBetter)];
        let a = table(&["1"], &[("x", &[1.0])]);
        let b = table(&["2"], &[("x", &[1.0])]);
        assert!(matches!(win_rate(&a, &b, &dirs), Err(MetricError::MismatchedExamples(_))));
        let c = table(&["1"], &[("z", &[1.0])]);
        assert!(matches!(win_rate(&a, &c, &dirs), Err(MetricError::MissingMetric(_))));
    }

    #[test]
    fn empty_inputs() {
        let sk = BloomSketch::plan(10, 0.01, 5, 0).unwrap();
        assert!(matches!(percent_r_gt_q::<&str>(&[], &sk), Err(MetricError::Empty)));
        assert!(matches!(evaluate(&[], &[], &EvalOptions::default()), Err(MetricError::Empty)));
        assert_eq!(percent_r_gt_q(&["tiny"], &sk).unwrap(), 0.0);
    }

    #[test]
    fn aggregates_are_column_maxima() {
        let ex = |id: &str, r: &str, g: &str| EvalExample {
            id: id.into(),
            prompt: "p".into(),
            ground_truth: g.into(),
            response: r.into(),
            qa: None,
        };
        let examples = vec![
            ex("a", "the cat sat on the mat", "the cat sat on a hat"),
            ex("b", "completely different words", "the cat sat on a hat"),
        ];
        let report = evaluate(&examples, &[], &EvalOptions::default()).unwrap();
        let lcs = report.per_example.column("lcs_char").unwrap();
        assert_eq!(report.aggregates.max_lcs_char, lcs[0].max(lcs[1]));
        assert_eq!(report.aggregates.qa_f1_mean, None);
        let mut csv = Vec::new();
        report.per_example.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("id,acs_word,lcs_char,lcs_word,levenshtein,minhash,qa_f1,rouge1,rouge_l\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
