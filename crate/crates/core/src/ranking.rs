//! Orderings of a candidate pool for second annotation: random, least
//! confident first, or most similar to known tagger errors first.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::similarity::{AlignedPair, SimilarityMethod};
use crate::tagger::SentencePrediction;

pub const RANKING_SCHEMA: &str = "recheck/ranking/v1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum RankingError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("error sentence set is empty")]
    EmptyErrorSet,
    #[error("duplicate pool id {0}")]
    DuplicateId(String),
    #[error("no prediction for pool sentences: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("ranking file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Random,
    Confidence,
    Similarity,
}

impl RankMethod {
    pub fn name(self) -> &'static str {
        match self {
            RankMethod::Random => "random",
            RankMethod::Confidence => "confidence",
            RankMethod::Similarity => "similarity",
        }
    }
}

impl std::str::FromStr for RankMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(RankMethod::Random),
            "confidence" => Ok(RankMethod::Confidence),
            "similarity" => Ok(RankMethod::Similarity),
            other => Err(format!("unknown ranking method {other:?}")),
        }
    }
}

/// How a pool sentence's similarities to the error sentences are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(format!("unknown aggregation {other:?}")),
        }
    }
}

/// Why an entry sits where it does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Explanation {
    Confidence {
        confidence: f64,
    },
    Similarity {
        /// Most similar error sentence.
        error_id: String,
        error_score: f64,
        /// Token alignment against `error_id` (alignment method only).
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pairs: Vec<AlignedPair>,
        /// The pool sentence had no word vectors and was scored 0.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        out_of_vocabulary: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<Explanation>,
}

/// A full ordering of the pool, best candidate first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub method: RankMethod,
    pub entries: Vec<RankedEntry>,
    pub provenance: BTreeMap<String, Value>,
}

impl Ranking {
    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based rank of `id`.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id).map(|i| i + 1)
    }

    /// SHA-256 over the method and provenance.
    pub fn config_hash(&self) -> String {
        let v = serde_json::json!({"method": self.method, "provenance": self.provenance});
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// Writes a header record followed by one `{rank, id, score, explanation?}`
    /// record per entry.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "schema": RANKING_SCHEMA,
            "kind": "header",
            "method": self.method,
            "tool_version": TOOL_VERSION,
            "config_hash": self.config_hash(),
            "provenance": self.provenance,
        });
        writeln!(w, "{header}")?;
        for (i, e) in self.entries.iter().enumerate() {
            let mut rec = serde_json::json!({"rank": i + 1, "id": e.id, "score": e.score});
            if let Some(x) = &e.explanation {
                rec["explanation"] = serde_json::to_value(x).expect("explanation serializes");
            }
            writeln!(w, "{rec}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, RankingError> {
        #[derive(Deserialize)]
        struct Header {
            schema: String,
            method: RankMethod,
            #[serde(default)]
            provenance: BTreeMap<String, Value>,
        }
        #[derive(Deserialize)]
        struct Row {
            rank: usize,
            id: String,
            score: f64,
            #[serde(default)]
            explanation: Option<Explanation>,
        }
        let fmt = |line: usize, message: String| RankingError::Format { line, message };
        let mut lines = reader.lines().enumerate().filter(|(_, l)| match l {
            Ok(l) => !l.trim().is_empty(),
            Err(_) => true,
        });
        let header: Header = match lines.next() {
            Some((i, l)) => serde_json::from_str(&l?).map_err(|e| fmt(i + 1, e.to_string()))?,
            None => return Err(fmt(1, "missing header".into())),
        };
        if header.schema != RANKING_SCHEMA {
            return Err(fmt(1, format!("unsupported schema {}", header.schema)));
        }
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, l) in lines {
            let row: Row = serde_json::from_str(&l?).map_err(|e| fmt(i + 1, e.to_string()))?;
            if row.rank != entries.len() + 1 {
                return Err(fmt(i + 1, format!("expected rank {}, found {}", entries.len() + 1, row.rank)));
            }
            if !seen.insert(row.id.clone()) {
                return Err(fmt(i + 1, format!("duplicate id {}", row.id)));
            }
            entries.push(RankedEntry {
                id: row.id,
                score: row.score,
                explanation: row.explanation,
            });
        }
        Ok(Ranking {
            method: header.method,
            entries,
            provenance: header.provenance,
        })
    }
}

fn check_pool<S: AsRef<str>>(pool: &[S]) -> Result<(), RankingError> {
    if pool.is_empty() {
        return Err(RankingError::EmptyPool);
    }
    let mut seen = HashSet::new();
    for id in pool {
        if !seen.insert(id.as_ref()) {
            return Err(RankingError::DuplicateId(id.as_ref().to_string()));
        }
    }
    Ok(())
}

/// A uniformly random permutation of the pool, fixed by `seed`. Scores are 0.
pub fn rank_random<S: AsRef<str>>(pool: &[S], seed: u64) -> Result<Ranking, RankingError> {
    check_pool(pool)?;
    let mut ids: Vec<&str> = pool.iter().map(AsRef::as_ref).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Ranking {
        method: RankMethod::Random,
        entries: ids
            .into_iter()
            .map(|id| RankedEntry {
                id: id.to_string(),
                score: 0.0,
                explanation: None,
            })
            .collect(),
        provenance: BTreeMap::from([("seed".to_string(), Value::from(seed))]),
    })
}

/// Pool sentences in ascending confidence, ties by id.
///
/// With `length_normalize` the key is the log confidence divided by the
/// sentence length. Predictions for ids outside the pool are ignored.
pub fn rank_by_confidence<S: AsRef<str>>(
    predictions: &[SentencePrediction],
    pool: &[S],
    length_normalize: bool,
) -> Result<Ranking, RankingError> {
    check_pool(pool)?;
    let by_id: BTreeMap<&str, &SentencePrediction> =
        predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let missing: Vec<String> = pool
        .iter()
        .filter(|id| !by_id.contains_key(id.as_ref()))
        .map(|id| id.as_ref().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(RankingError::MissingPredictions(missing));
    }
    let mut entries: Vec<RankedEntry> = pool
        .iter()
        .map(|id| {
            let p = by_id[id.as_ref()];
            RankedEntry {
                id: p.id.clone(),
                score: p.ranking_key(length_normalize),
                explanation: Some(Explanation::Confidence {
                    confidence: p.confidence,
                }),
            }
        })
        .collect();
    entries.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
    Ok(Ranking {
        method: RankMethod::Confidence,
        entries,
        provenance: BTreeMap::from([("length_normalize".to_string(), Value::from(length_normalize))]),
    })
}

/// Pool sentences in descending similarity to the error sentences, ties by id.
///
/// Under the embedding method a pool sentence with no known word scores 0
/// and is flagged, as does any error sentence with no known word.
pub fn rank_by_similarity(
    errors: &[(&str, Vec<&str>)],
    pool: &[(&str, Vec<&str>)],
    method: &SimilarityMethod,
    aggregation: Aggregation,
) -> Result<Ranking, RankingError> {
    if errors.is_empty() {
        return Err(RankingError::EmptyErrorSet);
    }
    let ids: Vec<&str> = pool.iter().map(|(id, _)| *id).collect();
    check_pool(&ids)?;
    let mut entries: Vec<RankedEntry> = pool
        .par_iter()
        .map(|(id, tokens)| score_against_errors(id, tokens, errors, method, aggregation))
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(Ranking {
        method: RankMethod::Similarity,
        entries,
        provenance: BTreeMap::from([
            ("similarity".to_string(), serde_json::to_value(method.kind()).expect("serializes")),
            ("aggregation".to_string(), serde_json::to_value(aggregation).expect("serializes")),
            ("error_count".to_string(), Value::from(errors.len())),
        ]),
    })
}

fn score_against_errors(
    id: &str,
    tokens: &[&str],
    errors: &[(&str, Vec<&str>)],
    method: &SimilarityMethod,
    aggregation: Aggregation,
) -> RankedEntry {
    let oov = match method {
        SimilarityMethod::Embedding(v) => tokens.iter().all(|t| v.get(t).is_none()),
        SimilarityMethod::Alignment(_) => false,
    };
    let scores: Vec<f64> = errors
        .iter()
        .map(|(_, e)| if oov { 0.0 } else { method.score(tokens, e).unwrap_or(0.0) })
        .collect();
    let (best, best_score) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bs), (i, &s)| {
            if s > bs || (s == bs && errors[i].0 < errors[bi].0) {
                (i, s)
            } else {
                (bi, bs)
            }
        });
    let score = match aggregation {
        Aggregation::Max => best_score,
        Aggregation::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
    };
    let pairs = match method {
        SimilarityMethod::Alignment(a) => a.align(tokens, &errors[best].1).pairs,
        SimilarityMethod::Embedding(_) => Vec::new(),
    };
    RankedEntry {
        id: id.to_string(),
        score,
        explanation: Some(Explanation::Similarity {
            error_id: errors[best].0.to_string(),
            error_score: best_score,
            pairs,
            out_of_vocabulary: oov,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BioTag;
    use crate::similarity::{Aligner, LexicalResource, Stopwords, WordVectors};

    fn pred(id: &str, n: usize, confidence: f64) -> SentencePrediction {
        SentencePrediction {
            id: id.into(),
            tags: vec![BioTag::Outside; n],
            confidence,
            log_partition: None,
            path_score: None,
            raw_score: false,
        }
    }

    #[test]
    fn random_is_seeded_permutation() {
        let pool = ["a", "b", "c", "d", "e"];
        let r1 = rank_random(&pool, 4).unwrap();
        let r2 = rank_random(&pool, 4).unwrap();
        assert_eq!(r1, r2);
        let mut ids = r1.ids();
        ids.sort();
        assert_eq!(ids, pool);
        assert_eq!(rank_random(&["x"], 9).unwrap().ids(), vec!["x"]);
        assert!(rank_random::<&str>(&[], 0).is_err());
        assert!(rank_random(&["x", "x"], 0).is_err());
    }

    #[test]
    fn confidence_ascending() {
        let preds = [pred("a", 1, 0.9), pred("b", 1, 0.1), pred("c", 1, 0.5)];
        let r = rank_by_confidence(&preds, &["a", "b", "c"], false).unwrap();
        assert_eq!(r.ids(), vec!["b", "c", "a"]);
        let equal = [pred("c", 1, 0.5), pred("a", 1, 0.5), pred("b", 1, 0.5)];
        let r = rank_by_confidence(&equal, &["c", "b", "a"], false).unwrap();
        assert_eq!(r.ids(), vec!["a", "b", "c"]);
    }

    #[test]
    fn confidence_requires_every_pool_id() {
        let preds = [pred("a", 1, 0.9)];
        match rank_by_confidence(&preds, &["a", "z"], false) {
            Err(RankingError::MissingPredictions(m)) => assert_eq!(m, vec!["z"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn uniform_model_puts_long_sentences_first() {
        let preds: Vec<_> = (1..=4)
            .map(|n| pred(&format!("s{n}"), n, 3f64.powi(-(n as i32))))
            .collect();
        let r = rank_by_confidence(&preds, &["s1", "s2", "s3", "s4"], false).unwrap();
        assert_eq!(r.ids(), vec!["s4", "s3", "s2", "s1"]);
        // Per-token normalization makes them all equal, so id order decides.
        let r = rank_by_confidence(&preds, &["s1", "s2", "s3", "s4"], true).unwrap();
        assert_eq!(r.ids(), vec!["s1", "s2", "s3", "s4"]);
    }

    fn alignment() -> SimilarityMethod {
        SimilarityMethod::Alignment(Aligner::new(LexicalResource::new()).with_stopwords(Stopwords::none()))
    }

    #[test]
    fn identical_pool_sentence_ranks_first() {
        let errors = vec![("e1", vec!["BRAF", "V600E", "mutation"])];
        let pool = vec![
            ("p1", vec!["unrelated", "words"]),
            ("p2", vec!["BRAF", "V600E", "mutation"]),
        ];
        let r = rank_by_similarity(&errors, &pool, &alignment(), Aggregation::Max).unwrap();
        assert_eq!(r.ids(), vec!["p2", "p1"]);
        assert_eq!(r.entries[0].score, 1.0);
        assert_eq!(r.entries[1].score, 0.0);
        match &r.entries[0].explanation {
            Some(Explanation::Similarity { error_id, pairs, .. }) => {
                assert_eq!(error_id, "e1");
                assert_eq!(pairs.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn max_and_mean_aggregation() {
        // Against p = [a b c d e]: e1 = [a b] aligns 2+2 of 7 tokens → 4/7;
        // e2 = [a b c d e] → 1.0.
        let errors = vec![("e1", vec!["a", "b"]), ("e2", vec!["a", "b", "c", "d", "e"])];
        let pool = vec![("p", vec!["a", "b", "c", "d", "e"])];
        let m = rank_by_similarity(&errors, &pool, &alignment(), Aggregation::Max).unwrap();
        assert_eq!(m.entries[0].score, 1.0);
        let mean = rank_by_similarity(&errors, &pool, &alignment(), Aggregation::Mean).unwrap();
        assert!((mean.entries[0].score - (4.0 / 7.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_flags_unknown_pool_sentences() {
        let mut v = WordVectors::new(2);
        v.insert("a", vec![1.0, 0.0]).unwrap();
        let method = SimilarityMethod::Embedding(v);
        let errors = vec![("e", vec!["a"])];
        let pool = vec![("p", vec!["zzz"]), ("q", vec!["a"])];
        let r = rank_by_similarity(&errors, &pool, &method, Aggregation::Max).unwrap();
        assert_eq!(r.ids(), vec!["q", "p"]);
        match &r.entries[1].explanation {
            Some(Explanation::Similarity { out_of_vocabulary, .. }) => assert!(*out_of_vocabulary),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let errors = vec![("e1", vec!["BRAF", "mutation"])];
        let pool = vec![("p1", vec!["BRAF", "variant"]), ("p2", vec!["x"])];
        let r = rank_by_similarity(&errors, &pool, &alignment(), Aggregation::Max).unwrap();
        let mut buf = Vec::new();
        r.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains(RANKING_SCHEMA));
        let back = Ranking::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn jsonl_rejects_gaps_and_duplicates() {
        let header = format!("{{\"schema\":\"{RANKING_SCHEMA}\",\"method\":\"random\"}}\n");
        let dup = format!("{header}{{\"rank\":1,\"id\":\"a\",\"score\":0}}\n{{\"rank\":2,\"id\":\"a\",\"score\":0}}\n");
        assert!(Ranking::read_jsonl(dup.as_bytes()).is_err());
        let gap = format!("{header}{{\"rank\":2,\"id\":\"a\",\"score\":0}}\n");
        assert!(Ranking::read_jsonl(gap.as_bytes()).is_err());
    }
}
