//! Span-level NER scores, ranking scores at a cutoff, and multi-run summaries.
//!
//! NER scores are micro-averaged: true positives, false positives and false
//! negatives are summed over all sentences before dividing. A span matches
//! only if start, end and type agree exactly.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{spans_of, BioTag, MentionSpan, TagMap};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("sentence ids differ: missing from predictions [{}], unexpected [{}]", .missing.join(", "), .unexpected.join(", "))]
    IdMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("sentence {id}: gold has {gold} tags, prediction has {predicted}")]
    LengthMismatch {
        id: String,
        gold: usize,
        predicted: usize,
    },
    #[error("cutoff {k} outside 1..={len}")]
    BadCutoff { k: usize, len: usize },
    #[error("no runs to aggregate")]
    NoRuns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NerScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl NerScore {
    /// Scores from counts. An empty denominator gives 1 when the other error
    /// count is also zero and 0 otherwise.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize, other: usize| {
            if den == 0 {
                if other == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, fn_);
        let recall = ratio(tp, tp + fn_, fp);
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
            tp,
            fp,
            fn_,
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_ids(gold: &TagMap, pred: &TagMap) -> Result<(), EvalError> {
    let missing: Vec<String> = gold.keys().filter(|k| !pred.contains_key(*k)).cloned().collect();
    let unexpected: Vec<String> = pred.keys().filter(|k| !gold.contains_key(*k)).cloned().collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(EvalError::IdMismatch {
            missing,
            unexpected,
        });
    }
    for (id, g) in gold {
        let p = &pred[id];
        if g.len() != p.len() {
            return Err(EvalError::LengthMismatch {
                id: id.clone(),
                gold: g.len(),
                predicted: p.len(),
            });
        }
    }
    Ok(())
}

fn filtered_spans(tags: &[BioTag], filter: Option<&str>) -> HashSet<MentionSpan> {
    spans_of(tags)
        .into_iter()
        .filter(|s| filter.is_none_or(|f| s.entity_type == f))
        .collect()
}

fn sentence_counts(gold: &[BioTag], pred: &[BioTag], filter: Option<&str>) -> (usize, usize, usize) {
    let g = filtered_spans(gold, filter);
    let p = filtered_spans(pred, filter);
    let tp = g.intersection(&p).count();
    (tp, p.len() - tp, g.len() - tp)
}

/// Exact-match span scores of `pred` against `gold`, optionally restricted to
/// one entity type.
pub fn score_ner(gold: &TagMap, pred: &TagMap, filter: Option<&str>) -> Result<NerScore, EvalError> {
    check_ids(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (id, g) in gold {
        let (a, b, c) = sentence_counts(g, &pred[id], filter);
        tp += a;
        fp += b;
        fn_ += c;
    }
    Ok(NerScore::from_counts(tp, fp, fn_))
}

/// Ids of sentences with at least one false positive or false negative.
pub fn error_sentences(gold: &TagMap, pred: &TagMap, filter: Option<&str>) -> Result<BTreeSet<String>, EvalError> {
    check_ids(gold, pred)?;
    Ok(gold
        .iter()
        .filter(|(id, g)| {
            let (_, fp, fn_) = sentence_counts(g, &pred[*id], filter);
            fp + fn_ > 0
        })
        .map(|(id, _)| id.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingScore {
    pub k: usize,
    pub hits: usize,
    pub total_discrepant: usize,
    pub precision: f64,
    /// Zero when there is nothing to find.
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of the first `k` ranked ids at finding
/// `discrepant` ones.
pub fn score_ranking<S: AsRef<str>>(
    ranking: &[S],
    discrepant: &BTreeSet<String>,
    k: usize,
) -> Result<RankingScore, EvalError> {
    if k == 0 || k > ranking.len() {
        return Err(EvalError::BadCutoff {
            k,
            len: ranking.len(),
        });
    }
    let hits = ranking[..k]
        .iter()
        .filter(|id| discrepant.contains(id.as_ref()))
        .count();
    let precision = hits as f64 / k as f64;
    let recall = if discrepant.is_empty() {
        0.0
    } else {
        hits as f64 / discrepant.len() as f64
    };
    Ok(RankingScore {
        k,
        hits,
        total_discrepant: discrepant.len(),
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

/// Mean and population standard deviation (divisor `n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::NoRuns);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Precision, recall and F1 summarized over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub runs: usize,
}

/// Anything with precision, recall and F1.
pub trait Prf {
    fn prf(&self) -> (f64, f64, f64);
}

impl Prf for NerScore {
    fn prf(&self) -> (f64, f64, f64) {
        (self.precision, self.recall, self.f1)
    }
}

impl Prf for RankingScore {
    fn prf(&self) -> (f64, f64, f64) {
        (self.precision, self.recall, self.f1)
    }
}

pub fn aggregate<T: Prf>(runs: &[T]) -> Result<AggregateScore, EvalError> {
    let pick = |f: fn((f64, f64, f64)) -> f64| -> Vec<f64> { runs.iter().map(|r| f(r.prf())).collect() };
    Ok(AggregateScore {
        precision: MetricSummary::of(&pick(|t| t.0))?,
        recall: MetricSummary::of(&pick(|t| t.1))?,
        f1: MetricSummary::of(&pick(|t| t.2))?,
        runs: runs.len(),
    })
}

/// A plain-text table with right-aligned numeric columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, header: &[&str]) -> Self {
        Self {
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, cell) in cells.iter().enumerate().take(cols) {
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[i]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[i]);
                }
            }
            s.trim_end().to_string()
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1));
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        out.push_str(&line(&self.header));
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

/// Formats a rate in [0, 1] as a percentage with one decimal.
pub fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_tags;

    fn map(entries: &[(&str, &[&str])]) -> TagMap {
        entries
            .iter()
            .map(|(id, tags)| (id.to_string(), parse_tags(tags).unwrap()))
            .collect()
    }

    #[test]
    fn one_extra_prediction() {
        let gold = map(&[("s", &["O", "B-Mutation", "I-Mutation", "O", "O"])]);
        let pred = map(&[("s", &["O", "B-Mutation", "I-Mutation", "O", "B-Mutation"])]);
        let s = score_ner(&gold, &pred, None).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (1, 1, 0));
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(error_sentences(&gold, &pred, None).unwrap().len(), 1);
    }

    #[test]
    fn identical_is_perfect() {
        let gold = map(&[("a", &["B-M", "O"]), ("b", &["O", "O"])]);
        let s = score_ner(&gold, &gold, None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert!(error_sentences(&gold, &gold, None).unwrap().is_empty());
    }

    #[test]
    fn overlap_is_one_fp_and_one_fn() {
        let gold = map(&[("s", &["O", "B-M", "I-M", "O"])]);
        let pred = map(&[("s", &["O", "B-M", "I-M", "I-M"])]);
        let s = score_ner(&gold, &pred, None).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (0, 1, 1));
        let e = error_sentences(&gold, &pred, None).unwrap();
        assert_eq!(e.into_iter().collect::<Vec<_>>(), vec!["s".to_string()]);
    }

    #[test]
    fn empty_conventions() {
        let s = NerScore::from_counts(0, 0, 0);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = NerScore::from_counts(0, 0, 3);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = NerScore::from_counts(0, 2, 0);
        assert_eq!((s.precision, s.recall), (0.0, 0.0));
    }

    #[test]
    fn filter_restricts_types() {
        let gold = map(&[("s", &["B-Gene", "B-Mutation"])]);
        let pred = map(&[("s", &["O", "B-Mutation"])]);
        let s = score_ner(&gold, &pred, Some("Mutation")).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (1, 0, 0));
        assert!(error_sentences(&gold, &pred, Some("Mutation")).unwrap().is_empty());
    }

    #[test]
    fn id_mismatch_lists_offenders() {
        let gold = map(&[("a", &["O"]), ("b", &["O"])]);
        let pred = map(&[("a", &["O"]), ("c", &["O"])]);
        match score_ner(&gold, &pred, None) {
            Err(EvalError::IdMismatch { missing, unexpected }) => {
                assert_eq!(missing, vec!["b"]);
                assert_eq!(unexpected, vec!["c"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ranking_hand_example() {
        let ranking: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let disc: BTreeSet<String> = ["s3", "s8"].iter().map(|s| s.to_string()).collect();
        let r = score_ranking(&ranking, &disc, 5).unwrap();
        assert_eq!(r.hits, 1);
        assert_eq!(r.precision, 0.2);
        assert_eq!(r.recall, 0.5);
        assert!((r.f1 - 2.0 * 0.1 / 0.7).abs() < 1e-12);
        assert!(score_ranking(&ranking, &disc, 11).is_err());
        assert!(score_ranking(&ranking, &disc, 0).is_err());
        let all = score_ranking(&ranking, &disc, 10).unwrap();
        assert_eq!(all.precision, 0.2);
    }

    #[test]
    fn aggregate_population_std() {
        let runs = [NerScore::from_counts(3, 2, 0), NerScore::from_counts(4, 1, 0)];
        let a = aggregate(&runs).unwrap();
        assert!((a.precision.mean - 0.7).abs() < 1e-12);
        assert!((a.precision.std - 0.1).abs() < 1e-12);
        assert_eq!(a.runs, 2);
        let one = MetricSummary::of(&[0.7]).unwrap();
        assert_eq!((one.mean, one.std), (0.7, 0.0));
        assert!(aggregate::<NerScore>(&[]).is_err());
    }

    #[test]
    fn table_aligns_columns() {
        let mut t = Table::new("T", &["k", "P"]);
        t.push(vec!["100".into(), "15.6".into()]);
        t.push(vec!["All".into(), "9.0".into()]);
        assert_eq!(t.render(), "T\nk       P\n---------\n100  15.6\nAll   9.0\n");
    }
}
