//! Tokenized, BIO-labeled corpora with parallel annotation versions.
//!
//! A sentence is the unit of annotation. Each sentence carries one token list
//! and, inside a [`ParallelCorpus`], up to two label sequences: the
//! single-annotator (pre-adjudicated) version and the agreed (adjudicated)
//! version. Mentions are compared at span level via [`spans_of`].

mod conll;
mod parallel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use conll::{parse_conll, parse_conll_str, serialize_conll, write_conll};
pub use parallel::{
    discrepant_ids, read_splits, spans_differ, split_corpus, Annotation, ParallelCorpus,
    Sentence, Split, SplitRatios, TagMap,
};

/// Errors raised while reading or assembling corpora.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid tag {0:?}: expected \"O\", \"B-<type>\" or \"I-<type>\"")]
    InvalidTag(String),
    #[error("sentence {id}: {message}")]
    Inconsistent { id: String, message: String },
    #[error("sentence {0} has no pre-adjudicated annotation")]
    MissingPreAdjudicated(String),
    #[error("unknown split name {0:?}")]
    UnknownSplit(String),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("cannot split {sentences} sentences into {splits} non-empty splits")]
    TooFewSentences { sentences: usize, splits: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One token of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

/// A BIO2 label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BioTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl BioTag {
    pub fn begin(entity_type: impl Into<String>) -> Self {
        BioTag::Begin(entity_type.into())
    }

    pub fn inside(entity_type: impl Into<String>) -> Self {
        BioTag::Inside(entity_type.into())
    }

    pub fn entity_type(&self) -> Option<&str> {
        match self {
            BioTag::Outside => None,
            BioTag::Begin(t) | BioTag::Inside(t) => Some(t),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, BioTag::Outside)
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Outside => f.write_str("O"),
            BioTag::Begin(t) => write!(f, "B-{t}"),
            BioTag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for BioTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioTag::Outside);
        }
        let invalid = || CorpusError::InvalidTag(s.to_string());
        let (prefix, ty) = s.split_once('-').ok_or_else(invalid)?;
        if ty.is_empty() || ty.chars().any(char::is_whitespace) {
            return Err(invalid());
        }
        match prefix {
            "B" => Ok(BioTag::Begin(ty.to_string())),
            "I" => Ok(BioTag::Inside(ty.to_string())),
            _ => Err(invalid()),
        }
    }
}

impl Serialize for BioTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a whole tag sequence, failing on the first malformed tag.
pub fn parse_tags<S: AsRef<str>>(tags: &[S]) -> Result<Vec<BioTag>, CorpusError> {
    tags.iter().map(|t| t.as_ref().parse()).collect()
}

/// A sentence with a single label sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub tags: Vec<BioTag>,
}

impl TaggedSentence {
    /// Builds a sentence from token strings; `tags` must be as long as `tokens`.
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        tokens: impl IntoIterator<Item = S>,
        tags: Vec<BioTag>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let tokens: Vec<Token> = tokens
            .into_iter()
            .enumerate()
            .map(|(index, text)| Token {
                text: text.into(),
                index,
            })
            .collect();
        if tokens.len() != tags.len() {
            return Err(CorpusError::Inconsistent {
                message: format!("{} tokens but {} tags", tokens.len(), tags.len()),
                id,
            });
        }
        Ok(Self { id, tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn spans(&self) -> Vec<MentionSpan> {
        spans_of(&self.tags)
    }
}

/// A typed mention over inclusive token indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

impl MentionSpan {
    pub fn new(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        Self {
            start,
            end,
            entity_type: entity_type.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Decodes mention spans from a tag sequence.
///
/// Maximal `B-X I-X*` runs become spans. An `I-X` that does not continue an
/// open `X` span (after `O`, at sentence start, or after a different type)
/// opens a new span as if it were `B-X`.
pub fn spans_of(tags: &[BioTag]) -> Vec<MentionSpan> {
    let mut spans = Vec::new();
    let mut open: Option<MentionSpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::Outside => {
                spans.extend(open.take());
            }
            BioTag::Begin(ty) => {
                spans.extend(open.take());
                open = Some(MentionSpan::new(i, i, ty.clone()));
            }
            BioTag::Inside(ty) => match open.as_mut() {
                Some(span) if span.entity_type == *ty => span.end = i,
                _ => {
                    spans.extend(open.take());
                    open = Some(MentionSpan::new(i, i, ty.clone()));
                }
            },
        }
    }
    spans.extend(open);
    spans
}

/// Position of the first `I-X` that does not continue a `B-X` or `I-X`, if
/// any. Sequences without one are strict BIO2.
pub fn first_bio2_violation(tags: &[BioTag]) -> Option<usize> {
    let mut prev: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::Inside(ty) if prev != Some(ty.as_str()) => return Some(i),
            _ => prev = tag.entity_type(),
        }
    }
    None
}

/// Encodes spans back into a BIO2 sequence of the given length.
///
/// Spans must be in bounds and non-overlapping; later spans overwrite earlier
/// ones otherwise.
pub fn tags_from_spans(len: usize, spans: &[MentionSpan]) -> Vec<BioTag> {
    let mut tags = vec![BioTag::Outside; len];
    for span in spans {
        for (i, tag) in tags
            .iter_mut()
            .enumerate()
            .take(span.end + 1)
            .skip(span.start)
        {
            *tag = if i == span.start {
                BioTag::Begin(span.entity_type.clone())
            } else {
                BioTag::Inside(span.entity_type.clone())
            };
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &[&str]) -> Vec<BioTag> {
        parse_tags(s).unwrap()
    }

    #[test]
    fn tag_grammar() {
        assert_eq!("O".parse::<BioTag>().unwrap(), BioTag::Outside);
        assert_eq!(
            "B-Mutation".parse::<BioTag>().unwrap(),
            BioTag::begin("Mutation")
        );
        assert_eq!("I-Gene".parse::<BioTag>().unwrap(), BioTag::inside("Gene"));
        for bad in ["", "o", "B", "B-", "X-Mutation", "E-Gene", "B-Two words", "BMut"] {
            assert!(bad.parse::<BioTag>().is_err(), "{bad:?} accepted");
        }
        assert_eq!(BioTag::begin("Mutation").to_string(), "B-Mutation");
    }

    #[test]
    fn begin_inside_run_is_one_span() {
        assert_eq!(
            spans_of(&tags(&["B-Mutation", "I-Mutation", "O"])),
            vec![MentionSpan::new(0, 1, "Mutation")]
        );
    }

    #[test]
    fn adjacent_begin_starts_new_span() {
        assert_eq!(
            spans_of(&tags(&["O", "B-Mutation", "B-Mutation"])),
            vec![
                MentionSpan::new(1, 1, "Mutation"),
                MentionSpan::new(2, 2, "Mutation")
            ]
        );
    }

    #[test]
    fn dangling_inside_is_repaired_to_begin() {
        assert_eq!(
            spans_of(&tags(&["O", "I-Mutation"])),
            vec![MentionSpan::new(1, 1, "Mutation")]
        );
        assert_eq!(
            spans_of(&tags(&["B-Mutation", "I-Gene", "I-Gene"])),
            vec![
                MentionSpan::new(0, 0, "Mutation"),
                MentionSpan::new(1, 2, "Gene")
            ]
        );
    }

    #[test]
    fn strict_bio2_check() {
        assert_eq!(first_bio2_violation(&tags(&["B-M", "I-M", "O", "B-G"])), None);
        assert_eq!(first_bio2_violation(&tags(&["O", "I-M"])), Some(1));
        assert_eq!(first_bio2_violation(&tags(&["I-M"])), Some(0));
        assert_eq!(first_bio2_violation(&tags(&["B-M", "I-G"])), Some(1));
    }

    #[test]
    fn spans_round_trip_through_tags() {
        let t = tags(&["B-Mutation", "I-Mutation", "O", "B-Gene", "B-Gene"]);
        assert_eq!(tags_from_spans(t.len(), &spans_of(&t)), t);
    }

    #[test]
    fn sentence_length_mismatch_is_rejected() {
        assert!(TaggedSentence::new("x", ["a", "b"], vec![BioTag::Outside]).is_err());
    }
}
