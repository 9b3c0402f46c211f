use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conll::{parse_conll, write_conll};
use super::{spans_of, BioTag, CorpusError, MentionSpan, TaggedSentence, Token};

/// Label sequences keyed by sentence id.
pub type TagMap = BTreeMap<String, Vec<BioTag>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test1,
    Test2,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::Test1, Split::Test2];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
        }
    }

    /// Parses a comma-separated list such as `train,dev`.
    pub fn parse_list(s: &str) -> Result<Vec<Split>, CorpusError> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|split| split.name() == s)
            .ok_or_else(|| CorpusError::UnknownSplit(s.to_string()))
    }
}

/// Which annotation version to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotation {
    #[serde(alias = "pre-adjudicated")]
    Pre,
    #[serde(alias = "adjudicated")]
    Adj,
}

impl FromStr for Annotation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" | "pre-adjudicated" => Ok(Annotation::Pre),
            "adj" | "adjudicated" => Ok(Annotation::Adj),
            other => Err(format!("unknown annotation version {other:?} (pre|adj)")),
        }
    }
}

/// Train/dev/test1/test2 proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 4]);

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios([0.4, 0.4, 0.1, 0.1])
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.0.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(CorpusError::InvalidRatios(format!(
                "{:?}: every ratio must be positive",
                self.0
            )));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(format!(
                "{:?} sums to {sum}, expected 1",
                self.0
            )));
        }
        Ok(())
    }

    /// Split sizes for `n` sentences by largest-remainder rounding, with every
    /// split kept non-empty.
    pub fn sizes(&self, n: usize) -> Result<[usize; 4], CorpusError> {
        self.validate()?;
        if n < 4 {
            return Err(CorpusError::TooFewSentences {
                sentences: n,
                splits: 4,
            });
        }
        let quotas: Vec<f64> = self.0.iter().map(|r| r * n as f64).collect();
        let mut sizes = [0usize; 4];
        for (size, q) in sizes.iter_mut().zip(&quotas) {
            *size = q.floor() as usize;
        }
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let assigned: usize = sizes.iter().sum();
        for &i in order.iter().take(n - assigned) {
            sizes[i] += 1;
        }
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let largest = (0..4).max_by_key(|&i| (sizes[i], 4 - i)).unwrap();
            sizes[largest] -= 1;
            sizes[empty] += 1;
        }
        Ok(sizes)
    }
}

impl FromStr for SplitRatios {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| CorpusError::InvalidRatios(s.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| CorpusError::InvalidRatios(format!("{s}: expected four values")))?;
        let ratios = SplitRatios(arr);
        ratios.validate()?;
        Ok(ratios)
    }
}

/// Assigns ids to splits by a seeded shuffle. Deterministic for a fixed seed.
pub fn split_corpus(
    ids: &[String],
    ratios: SplitRatios,
    seed: u64,
) -> Result<BTreeMap<String, Split>, CorpusError> {
    let sizes = ratios.sizes(ids.len())?;
    let mut order: Vec<&String> = ids.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = BTreeMap::new();
    let mut it = order.into_iter();
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        for id in it.by_ref().take(size) {
            out.insert(id.clone(), split);
        }
    }
    Ok(out)
}

/// A sentence's id and tokens, without labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Two annotation versions over one token layer, partitioned into splits.
///
/// Immutable once built; fixes produce a new corpus via
/// [`ParallelCorpus::with_pre_overrides`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    sentences: Vec<Sentence>,
    index: HashMap<String, usize>,
    pre: TagMap,
    adj: TagMap,
    splits: BTreeMap<String, Split>,
}

impl ParallelCorpus {
    /// Assembles a corpus. Every adjudicated sentence needs a split;
    /// pre-adjudicated sentences are matched by id and must carry identical
    /// tokens.
    pub fn new(
        adjudicated: Vec<TaggedSentence>,
        pre_adjudicated: Vec<TaggedSentence>,
        splits: BTreeMap<String, Split>,
    ) -> Result<Self, CorpusError> {
        let mut sentences = Vec::with_capacity(adjudicated.len());
        let mut index = HashMap::with_capacity(adjudicated.len());
        let mut adj = TagMap::new();
        for s in adjudicated {
            if s.tags.len() != s.tokens.len() {
                return Err(inconsistent(&s.id, "tag count differs from token count"));
            }
            if index.insert(s.id.clone(), sentences.len()).is_some() {
                return Err(inconsistent(&s.id, "duplicate sentence id"));
            }
            adj.insert(s.id.clone(), s.tags);
            sentences.push(Sentence {
                id: s.id,
                tokens: s.tokens,
            });
        }
        let mut pre = TagMap::new();
        for s in pre_adjudicated {
            let Some(&pos) = index.get(&s.id) else {
                return Err(inconsistent(
                    &s.id,
                    "present in pre-adjudicated version only",
                ));
            };
            let same_tokens = sentences[pos].tokens.len() == s.tokens.len()
                && sentences[pos]
                    .tokens
                    .iter()
                    .zip(&s.tokens)
                    .all(|(a, b)| a.text == b.text);
            if !same_tokens {
                return Err(inconsistent(
                    &s.id,
                    "tokens differ between annotation versions",
                ));
            }
            if s.tags.len() != s.tokens.len() {
                return Err(inconsistent(&s.id, "tag count differs from token count"));
            }
            pre.insert(s.id, s.tags);
        }
        for id in splits.keys() {
            if !index.contains_key(id) {
                return Err(inconsistent(id, "split assigned to unknown sentence"));
            }
        }
        if let Some(s) = sentences.iter().find(|s| !splits.contains_key(&s.id)) {
            return Err(inconsistent(&s.id, "no split assigned"));
        }
        Ok(Self {
            sentences,
            index,
            pre,
            adj,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.index.get(id).map(|&i| &self.sentences[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn pre_adjudicated(&self, id: &str) -> Option<&[BioTag]> {
        self.pre.get(id).map(Vec::as_slice)
    }

    pub fn adjudicated(&self, id: &str) -> Option<&[BioTag]> {
        self.adj.get(id).map(Vec::as_slice)
    }

    pub fn tags(&self, id: &str, version: Annotation) -> Option<&[BioTag]> {
        match version {
            Annotation::Pre => self.pre_adjudicated(id),
            Annotation::Adj => self.adjudicated(id),
        }
    }

    pub fn split(&self, id: &str) -> Option<Split> {
        self.splits.get(id).copied()
    }

    pub fn splits(&self) -> &BTreeMap<String, Split> {
        &self.splits
    }

    /// Ids in corpus order belonging to any of `pool`.
    pub fn ids_in(&self, pool: &[Split]) -> Vec<&str> {
        self.sentences
            .iter()
            .filter(|s| self.splits.get(&s.id).is_some_and(|sp| pool.contains(sp)))
            .map(|s| s.id.as_str())
            .collect()
    }

    pub fn sentences_in(&self, pool: &[Split]) -> Vec<&Sentence> {
        self.ids_in(pool)
            .into_iter()
            .map(|id| self.sentence(id).unwrap())
            .collect()
    }

    /// Sentences of `pool` labeled with one annotation version.
    pub fn tagged(
        &self,
        pool: &[Split],
        version: Annotation,
    ) -> Result<Vec<TaggedSentence>, CorpusError> {
        self.ids_in(pool)
            .into_iter()
            .map(|id| self.tagged_sentence(id, version))
            .collect()
    }

    pub fn tagged_sentence(
        &self,
        id: &str,
        version: Annotation,
    ) -> Result<TaggedSentence, CorpusError> {
        let sentence = self
            .sentence(id)
            .ok_or_else(|| inconsistent(id, "unknown sentence"))?;
        let tags = self.tags(id, version).ok_or_else(|| match version {
            Annotation::Pre => CorpusError::MissingPreAdjudicated(id.to_string()),
            Annotation::Adj => inconsistent(id, "no adjudicated annotation"),
        })?;
        Ok(TaggedSentence {
            id: sentence.id.clone(),
            tokens: sentence.tokens.clone(),
            tags: tags.to_vec(),
        })
    }

    /// Adjudicated labels of `pool` as a map.
    pub fn tag_map(&self, pool: &[Split], version: Annotation) -> Result<TagMap, CorpusError> {
        Ok(self
            .tagged(pool, version)?
            .into_iter()
            .map(|s| (s.id, s.tags))
            .collect())
    }

    /// Returns a copy whose pre-adjudicated labels are replaced for the given
    /// ids. Lengths are checked against token counts.
    pub fn with_pre_overrides<'a>(
        &self,
        overrides: impl IntoIterator<Item = (&'a str, &'a [BioTag])>,
    ) -> Result<Self, CorpusError> {
        let mut out = self.clone();
        for (id, tags) in overrides {
            let sentence = self
                .sentence(id)
                .ok_or_else(|| inconsistent(id, "unknown sentence"))?;
            if sentence.len() != tags.len() {
                return Err(inconsistent(id, "override length differs from token count"));
            }
            out.pre.insert(id.to_string(), tags.to_vec());
        }
        Ok(out)
    }

    /// Sha-256 over the canonical serialization of both versions and splits.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.sentences {
            hasher.update(s.id.as_bytes());
            hasher.update([0]);
            for (i, t) in s.tokens.iter().enumerate() {
                hasher.update(t.text.as_bytes());
                hasher.update(b"\t");
                hasher.update(self.adj[&s.id][i].to_string().as_bytes());
                hasher.update(b"\t");
                match self.pre.get(&s.id) {
                    Some(p) => hasher.update(p[i].to_string().as_bytes()),
                    None => hasher.update(b"-"),
                }
                hasher.update(b"\n");
            }
            hasher.update(self.splits[&s.id].name().as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Reads `<prefix>.adj.conll`, `<prefix>.pre.conll` (optional) and
    /// `<prefix>.splits`. A directory prefix means `<dir>/corpus`.
    pub fn load(prefix: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let prefix = resolve_prefix(prefix.as_ref());
        let adj_path = with_suffix(&prefix, "adj.conll");
        let pre_path = with_suffix(&prefix, "pre.conll");
        let splits_path = with_suffix(&prefix, "splits");
        let adj = parse_conll(open(&adj_path)?)?;
        let pre = if pre_path.exists() {
            parse_conll(open(&pre_path)?)?
        } else {
            Vec::new()
        };
        let splits = read_splits(open(&splits_path)?)?;
        Self::new(adj, pre, splits)
    }

    /// Writes the three files read by [`ParallelCorpus::load`].
    pub fn save(&self, prefix: impl AsRef<Path>) -> Result<(), CorpusError> {
        let prefix = resolve_prefix(prefix.as_ref());
        if let Some(parent) = prefix.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
        }
        let adj: Vec<TaggedSentence> = self
            .sentences
            .iter()
            .map(|s| self.tagged_sentence(&s.id, Annotation::Adj))
            .collect::<Result<_, _>>()?;
        write_file(&with_suffix(&prefix, "adj.conll"), |w| write_conll(w, &adj))?;
        if !self.pre.is_empty() {
            // Sentences lacking a pre-adjudicated version are written with
            // all-O labels so both files keep the same sentence order.
            let pre: Vec<TaggedSentence> = self
                .sentences
                .iter()
                .map(|s| TaggedSentence {
                    id: s.id.clone(),
                    tokens: s.tokens.clone(),
                    tags: self
                        .pre
                        .get(&s.id)
                        .cloned()
                        .unwrap_or_else(|| vec![BioTag::Outside; s.len()]),
                })
                .collect();
            write_file(&with_suffix(&prefix, "pre.conll"), |w| write_conll(w, &pre))?;
        }
        write_file(&with_suffix(&prefix, "splits"), |w| {
            for s in &self.sentences {
                writeln!(w, "{}\t{}", s.id, self.splits[&s.id])?;
            }
            Ok(())
        })
    }

    /// Mention spans of one version of a sentence.
    pub fn spans(&self, id: &str, version: Annotation) -> Option<Vec<MentionSpan>> {
        self.tags(id, version).map(spans_of)
    }
}

/// Whether two label sequences decode to different mention sets.
pub fn spans_differ(a: &[BioTag], b: &[BioTag]) -> bool {
    let sa: BTreeSet<MentionSpan> = spans_of(a).into_iter().collect();
    let sb: BTreeSet<MentionSpan> = spans_of(b).into_iter().collect();
    sa != sb
}

/// Ids in `pool` whose pre-adjudicated mentions differ from the adjudicated
/// ones. Comparison is over (start, end, type) sets, so equivalent BIO
/// encodings of the same mentions do not count.
pub fn discrepant_ids(
    corpus: &ParallelCorpus,
    pool: &[Split],
) -> Result<BTreeSet<String>, CorpusError> {
    let mut out = BTreeSet::new();
    for id in corpus.ids_in(pool) {
        let pre = corpus
            .pre_adjudicated(id)
            .ok_or_else(|| CorpusError::MissingPreAdjudicated(id.to_string()))?;
        let adj = corpus.adjudicated(id).expect("every sentence is adjudicated");
        if spans_differ(pre, adj) {
            out.insert(id.to_string());
        }
    }
    Ok(out)
}

/// Parses `id<TAB>split` lines.
pub fn read_splits<R: BufRead>(reader: R) -> Result<BTreeMap<String, Split>, CorpusError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            line: i + 1,
            message,
        };
        let (id, split) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected id<TAB>split".into()))?;
        let split = split.parse().map_err(|e: CorpusError| parse_err(e.to_string()))?;
        if out.insert(id.to_string(), split).is_some() {
            return Err(parse_err(format!("duplicate id {id}")));
        }
    }
    Ok(out)
}

fn inconsistent(id: &str, message: &str) -> CorpusError {
    CorpusError::Inconsistent {
        id: id.to_string(),
        message: message.to_string(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(path, e))
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn resolve_prefix(prefix: &Path) -> PathBuf {
    if prefix.is_dir() {
        prefix.join("corpus")
    } else {
        prefix.to_path_buf()
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
