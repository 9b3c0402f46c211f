use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use super::SimilarityError;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Symmetric word-pair similarity table (a stand-in for a paraphrase
/// database). Words are lowercased on load and lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexicalResource {
    pairs: HashMap<(String, String), f64>,
}

impl LexicalResource {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a pair in both directions. If the pair is already present the
    /// larger similarity is kept.
    pub fn insert(&mut self, a: &str, b: &str, sim: f64) -> Result<(), SimilarityError> {
        if !(sim > 0.0 && sim <= 1.0) {
            return Err(SimilarityError::Resource(format!(
                "similarity {sim} for ({a}, {b}) outside (0, 1]"
            )));
        }
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        for key in [(a.clone(), b.clone()), (b, a)] {
            let e = self.pairs.entry(key).or_insert(sim);
            *e = e.max(sim);
        }
        Ok(())
    }

    /// Similarity of two words; identical words score 1.
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        if a == b {
            return Some(1.0);
        }
        self.pairs.get(&(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Reads `word1<TAB>word2<TAB>sim` lines.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, SimilarityError> {
        let mut out = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| SimilarityError::Resource(e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |m: String| SimilarityError::Resource(format!("line {}: {m}", i + 1));
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let sim: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad similarity {:?}", fields[2])))?;
            out.insert(fields[0], fields[1], sim)
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimilarityError> {
        Self::from_reader(open(path.as_ref())?)
    }
}

/// Static word vectors of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<(), SimilarityError> {
        let word = word.into();
        if vector.len() != self.dim {
            return Err(SimilarityError::Vectors(format!(
                "{word}: dimension {} != {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::Vectors(format!("{word}: non-finite value")));
        }
        self.vectors.insert(word, vector);
        Ok(())
    }

    /// Exact lookup, falling back to the lowercased word.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine(self.get(a)?, self.get(b)?))
    }

    /// Reads the text format: a `<count> <dim>` header, then `word v1 .. vd`.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, SimilarityError> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| SimilarityError::Vectors(e.to_string()))?,
            None => return Err(SimilarityError::Vectors("empty vector file".into())),
        };
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| SimilarityError::Vectors(format!("bad header {header:?}")))?;
        let [count, dim] = nums[..] else {
            return Err(SimilarityError::Vectors(format!("bad header {header:?}")));
        };
        let mut out = Self::new(dim);
        for (i, line) in lines {
            let line = line.map_err(|e| SimilarityError::Vectors(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ').filter(|p| !p.is_empty());
            let word = parts.next().unwrap_or_default().to_string();
            let vector: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| SimilarityError::Vectors(format!("line {}: bad number", i + 1)))?;
            out.insert(word, vector)
                .map_err(|e| SimilarityError::Vectors(format!("line {}: {e}", i + 1)))?;
        }
        if out.len() != count {
            return Err(SimilarityError::Vectors(format!(
                "header announces {count} vectors, file has {}",
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimilarityError> {
        Self::from_reader(open(path.as_ref())?)
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Words excluded from alignment scoring, compared lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

impl Stopwords {
    pub fn none() -> Self {
        Stopwords(HashSet::new())
    }

    /// One word per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimilarityError> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map(|t| Self::parse(&t))
            .map_err(|e| SimilarityError::Io {
                path: path.display().to_string(),
                source: e,
            })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, SimilarityError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| SimilarityError::Io {
            path: path.display().to_string(),
            source: e,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resource_is_symmetric_and_lowercased() {
        let r = LexicalResource::from_reader("Mutation\tvariant\t0.8\n".as_bytes()).unwrap();
        assert_eq!(r.get("variant", "mutation"), Some(0.8));
        assert_eq!(r.get("MUTATION", "Variant"), Some(0.8));
        assert_eq!(r.get("x", "x"), Some(1.0));
        assert_eq!(r.get("x", "y"), None);
    }

    #[test]
    fn resource_rejects_out_of_range() {
        assert!(LexicalResource::from_reader("a\tb\t0\n".as_bytes()).is_err());
        assert!(LexicalResource::from_reader("a\tb\t1.5\n".as_bytes()).is_err());
        assert!(LexicalResource::from_reader("a\tb\n".as_bytes()).is_err());
    }

    #[test]
    fn vectors_parse() {
        let v = WordVectors::from_reader("2 2\na 1 0\nb 0.5 0.5\n".as_bytes()).unwrap();
        assert_eq!(v.dim(), 2);
        assert_eq!(v.get("A"), Some(&[1.0, 0.0][..]));
        assert!((v.cosine("a", "b").unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(WordVectors::from_reader("3 2\na 1 0\n".as_bytes()).is_err());
        assert!(WordVectors::from_reader("1 2\na 1\n".as_bytes()).is_err());
        assert!(WordVectors::from_reader("1 2\na 1 NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn default_stopwords_loaded() {
        let s = Stopwords::default();
        assert!(s.contains("The"));
        assert!(s.contains("."));
        assert!(!s.contains("mutation"));
    }
}
