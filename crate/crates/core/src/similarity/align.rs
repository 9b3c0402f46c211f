use serde::{Deserialize, Serialize};

use super::resources::{LexicalResource, Stopwords, WordVectors};

pub const DEFAULT_VECTOR_THRESHOLD: f64 = 0.7;

/// What licensed an aligned pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    Exact,
    Resource,
    Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub left: usize,
    pub right: usize,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub score: f64,
    /// Sorted by left index.
    pub pairs: Vec<AlignedPair>,
    /// Set when no word vectors were supplied.
    pub vector_pass_skipped: bool,
}

/// Greedy lexical aligner: exact matches, then resource pairs, then vector
/// neighbours, each one-to-one over content tokens.
#[derive(Debug, Clone)]
pub struct Aligner {
    pub resource: LexicalResource,
    pub vectors: Option<WordVectors>,
    pub stopwords: Stopwords,
    pub vector_threshold: f64,
}

impl Default for Aligner {
    fn default() -> Self {
        Self {
            resource: LexicalResource::new(),
            vectors: None,
            stopwords: Stopwords::default(),
            vector_threshold: DEFAULT_VECTOR_THRESHOLD,
        }
    }
}

impl Aligner {
    pub fn new(resource: LexicalResource) -> Self {
        Self {
            resource,
            ..Self::default()
        }
    }

    pub fn with_vectors(mut self, vectors: WordVectors) -> Self {
        self.vectors = Some(vectors);
        self
    }

    pub fn with_stopwords(mut self, stopwords: Stopwords) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.vector_threshold = threshold;
        self
    }

    pub fn align<S: AsRef<str>, T: AsRef<str>>(&self, s1: &[S], s2: &[T]) -> AlignmentResult {
        align_score(
            s1,
            s2,
            &self.resource,
            self.vectors.as_ref(),
            self.vector_threshold,
            &self.stopwords,
        )
    }
}

/// Aligns two token sequences and scores them by the proportion of aligned
/// content tokens, `(aligned₁ + aligned₂) / (content₁ + content₂)`.
///
/// Stopwords take no part unless neither sentence has any other token. Each
/// pass sorts its candidate pairs and accepts them greedily, breaking ties by
/// smaller left index, then smaller right index. The pair is always computed
/// with the lexicographically smaller (lowercased) sentence on the left, so
/// the score does not depend on argument order.
pub fn align_score<S: AsRef<str>, T: AsRef<str>>(
    s1: &[S],
    s2: &[T],
    resource: &LexicalResource,
    vectors: Option<&WordVectors>,
    threshold: f64,
    stopwords: &Stopwords,
) -> AlignmentResult {
    let a: Vec<String> = s1.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let b: Vec<String> = s2.iter().map(|t| t.as_ref().to_lowercase()).collect();
    if a <= b {
        align_oriented(&a, &b, resource, vectors, threshold, stopwords)
    } else {
        let mut r = align_oriented(&b, &a, resource, vectors, threshold, stopwords);
        for p in &mut r.pairs {
            std::mem::swap(&mut p.left, &mut p.right);
        }
        r.pairs.sort_by_key(|p| p.left);
        r
    }
}

fn align_oriented(
    a: &[String],
    b: &[String],
    resource: &LexicalResource,
    vectors: Option<&WordVectors>,
    threshold: f64,
    stopwords: &Stopwords,
) -> AlignmentResult {
    let mut ca: Vec<usize> = (0..a.len()).filter(|&i| !stopwords.contains(&a[i])).collect();
    let mut cb: Vec<usize> = (0..b.len()).filter(|&j| !stopwords.contains(&b[j])).collect();
    if ca.is_empty() && cb.is_empty() {
        ca = (0..a.len()).collect();
        cb = (0..b.len()).collect();
    }
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();

    let mut accept = |cands: Vec<(usize, usize)>, evidence: Evidence, pairs: &mut Vec<AlignedPair>| {
        for (i, j) in cands {
            if !used_a[i] && !used_b[j] {
                used_a[i] = true;
                used_b[j] = true;
                pairs.push(AlignedPair {
                    left: i,
                    right: j,
                    evidence,
                });
            }
        }
    };

    let mut exact: Vec<(usize, usize)> = ca
        .iter()
        .flat_map(|&i| cb.iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| a[i] == b[j])
        .collect();
    exact.sort_by_key(|&(i, j)| (i.abs_diff(j), i, j));
    accept(exact, Evidence::Exact, &mut pairs);

    let scored = |sim: &dyn Fn(&str, &str) -> Option<f64>, pairs: &[AlignedPair]| {
        let taken_a: Vec<usize> = pairs.iter().map(|p| p.left).collect();
        let taken_b: Vec<usize> = pairs.iter().map(|p| p.right).collect();
        let mut out: Vec<(f64, usize, usize)> = Vec::new();
        for &i in ca.iter().filter(|i| !taken_a.contains(i)) {
            for &j in cb.iter().filter(|j| !taken_b.contains(j)) {
                if let Some(s) = sim(&a[i], &b[j]) {
                    out.push((s, i, j));
                }
            }
        }
        out.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        out.into_iter().map(|(_, i, j)| (i, j)).collect::<Vec<_>>()
    };

    let by_resource = scored(&|x, y| resource.get(x, y), &pairs);
    accept(by_resource, Evidence::Resource, &mut pairs);

    if let Some(v) = vectors {
        let by_vector = scored(&|x, y| v.cosine(x, y).filter(|&c| c >= threshold), &pairs);
        accept(by_vector, Evidence::Vector, &mut pairs);
    }

    let denom = ca.len() + cb.len();
    let score = if denom == 0 {
        1.0
    } else {
        (2 * pairs.len()) as f64 / denom as f64
    };
    pairs.sort_by_key(|p| p.left);
    AlignmentResult {
        score,
        pairs,
        vector_pass_skipped: vectors.is_none(),
    }
}
