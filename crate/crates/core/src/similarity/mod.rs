//! Sentence similarity: greedy lexical alignment and averaged word vectors.

mod align;
mod resources;

use serde::{Deserialize, Serialize};

pub use align::{
    align_score, AlignedPair, Aligner, AlignmentResult, Evidence, DEFAULT_VECTOR_THRESHOLD,
};
pub use resources::{LexicalResource, Stopwords, WordVectors};

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("lexical resource: {0}")]
    Resource(String),
    #[error("word vectors: {0}")]
    Vectors(String),
    #[error("{side} sentence has no in-vocabulary tokens")]
    OutOfVocabulary { side: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Cosine between the mean vectors of the in-vocabulary tokens of each side.
pub fn embed_score<S: AsRef<str>, T: AsRef<str>>(
    s1: &[S],
    s2: &[T],
    vectors: &WordVectors,
) -> Result<f64, SimilarityError> {
    let m1 = mean_vector(s1, vectors).ok_or(SimilarityError::OutOfVocabulary { side: "first" })?;
    let m2 = mean_vector(s2, vectors).ok_or(SimilarityError::OutOfVocabulary { side: "second" })?;
    Ok(resources::cosine(&m1, &m2))
}

fn mean_vector<S: AsRef<str>>(tokens: &[S], vectors: &WordVectors) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; vectors.dim()];
    let mut n = 0usize;
    for v in tokens.iter().filter_map(|t| vectors.get(t.as_ref())) {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Which similarity a ranking or search uses.
#[derive(Debug, Clone)]
pub enum SimilarityMethod {
    Alignment(Aligner),
    Embedding(WordVectors),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Alignment,
    Embedding,
}

impl SimilarityMethod {
    pub fn kind(&self) -> MethodKind {
        match self {
            SimilarityMethod::Alignment(_) => MethodKind::Alignment,
            SimilarityMethod::Embedding(_) => MethodKind::Embedding,
        }
    }

    /// Similarity of two sentences. Embedding scores fail when either side is
    /// entirely out of vocabulary.
    pub fn score<S: AsRef<str>, T: AsRef<str>>(&self, s1: &[S], s2: &[T]) -> Result<f64, SimilarityError> {
        match self {
            SimilarityMethod::Alignment(a) => Ok(a.align(s1, s2).score),
            SimilarityMethod::Embedding(v) => embed_score(s1, s2, v),
        }
    }
}

/// The `k` pool sentences most similar to `query`, best first, ties by id.
///
/// A pool entry sharing the query's id is skipped. Sentences that cannot be
/// embedded score 0.
pub fn top_k_similar<S: AsRef<str>>(
    query: (&str, &[S]),
    pool: &[(&str, Vec<&str>)],
    method: &SimilarityMethod,
    k: usize,
) -> Vec<(String, f64)> {
    let (qid, qtokens) = query;
    let mut scored: Vec<(String, f64)> = pool
        .iter()
        .filter(|(id, _)| *id != qid)
        .map(|(id, toks)| (id.to_string(), method.score(qtokens, toks).unwrap_or(0.0)))
        .collect();
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors() -> WordVectors {
        let mut v = WordVectors::new(2);
        v.insert("a", vec![1.0, 0.0]).unwrap();
        v.insert("b", vec![0.5f64.sqrt(), 0.5f64.sqrt()]).unwrap();
        v.insert("c", vec![0.0, 3.0]).unwrap();
        v
    }

    #[test]
    fn embed_hand_cosine() {
        let v = vectors();
        let c = embed_score(&["a"], &["b"], &v).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(embed_score(&["a"], &["c"], &v).unwrap(), 0.0);
        assert!((embed_score(&["a", "c"], &["a", "c"], &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embed_skips_unknown_tokens_and_reports_empty_sides() {
        let v = vectors();
        let c = embed_score(&["a", "zzz"], &["a"], &v).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        assert!(matches!(
            embed_score(&["zzz"], &["a"], &v),
            Err(SimilarityError::OutOfVocabulary { side: "first" })
        ));
    }

    #[test]
    fn top_k_hand_example() {
        // content words against query {braf, mutation}:
        // p1 identical → 1.0; p2 {braf, kinase} → 2/4; p3 {egfr, kinase} → 0.
        let method = SimilarityMethod::Alignment(Aligner::default());
        let query = ["BRAF", "mutation"];
        let pool = vec![
            ("p3", vec!["EGFR", "kinase"]),
            ("p2", vec!["BRAF", "kinase"]),
            ("p1", vec!["BRAF", "mutation"]),
        ];
        let top = top_k_similar(("q", &query[..]), &pool, &method, 2);
        assert_eq!(top, vec![("p1".to_string(), 1.0), ("p2".to_string(), 0.5)]);
        let all = top_k_similar(("q", &query[..]), &pool, &method, 10);
        assert_eq!(all.len(), 3);
        assert_eq!(all[2], ("p3".to_string(), 0.0));
    }

    #[test]
    fn top_k_excludes_query_and_breaks_ties_by_id() {
        let method = SimilarityMethod::Alignment(Aligner::default());
        let pool = vec![
            ("q", vec!["x"]),
            ("b", vec!["x"]),
            ("a", vec!["x"]),
        ];
        let top = top_k_similar(("q", &["x"][..]), &pool, &method, 5);
        assert_eq!(top, vec![("a".to_string(), 1.0), ("b".to_string(), 1.0)]);
    }

    #[test]
    fn top_k_embedding_scores_unknown_as_zero() {
        let method = SimilarityMethod::Embedding(vectors());
        let pool = vec![("p", vec!["zzz"]), ("r", vec!["a"])];
        let top = top_k_similar(("q", &["a"][..]), &pool, &method, 2);
        assert_eq!(top[0].0, "r");
        assert_eq!(top[1], ("p".to_string(), 0.0));
    }
}
