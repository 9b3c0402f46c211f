use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synthetic::SynthConfig;
use super::ExperimentError;
use crate::corpus::Split;
use crate::ranking::{Aggregation, RankMethod};
use crate::similarity::{MethodKind, DEFAULT_VECTOR_THRESHOLD};
use crate::tagger::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// A cutoff: an absolute count or a percentage of the pool (`"20%"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub enum Threshold {
    Count(usize),
    Percent(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Count(usize),
    Text(String),
}

impl TryFrom<ThresholdRepr> for Threshold {
    type Error = String;

    fn try_from(r: ThresholdRepr) -> Result<Self, String> {
        match r {
            ThresholdRepr::Count(k) => Ok(Threshold::Count(k)),
            ThresholdRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Threshold> for ThresholdRepr {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::Count(k) => ThresholdRepr::Count(k),
            Threshold::Percent(_) => ThresholdRepr::Text(t.to_string()),
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Count(k) => write!(f, "{k}"),
            Threshold::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl std::str::FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("bad percentage threshold {s:?}"))?;
            if !(p > 0.0 && p <= 100.0) {
                return Err(format!("percentage threshold {s:?} outside (0, 100]"));
            }
            Ok(Threshold::Percent(p))
        } else {
            s.parse()
                .map(Threshold::Count)
                .map_err(|_| format!("bad threshold {s:?}"))
        }
    }
}

impl Threshold {
    /// The cutoff for a pool of `pool` sentences; percentages round to the
    /// nearest count, at least 1.
    pub fn resolve(self, pool: usize) -> Result<usize, ExperimentError> {
        let k = match self {
            Threshold::Count(k) => k,
            Threshold::Percent(p) => ((p / 100.0 * pool as f64).round() as usize).max(1),
        };
        if k == 0 || k > pool {
            return Err(ExperimentError::Config(format!(
                "threshold {self} resolves to {k}, outside 1..={pool}"
            )));
        }
        Ok(k)
    }

    /// Parses `"100,200,20%"`.
    pub fn parse_list(s: &str) -> Result<Vec<Threshold>, String> {
        s.split(',').map(str::parse).collect()
    }
}

/// Where sentences come from: files on disk or the synthetic generator
/// (regenerated for every seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub method: MethodKind,
    pub aggregation: Aggregation,
    /// `word1<TAB>word2<TAB>sim` table.
    pub resource: Option<PathBuf>,
    /// Word vectors; required by the embedding method.
    pub vectors: Option<PathBuf>,
    /// Stopword list replacing the bundled one.
    pub stopwords: Option<PathBuf>,
    pub vector_threshold: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            method: MethodKind::Alignment,
            aggregation: Aggregation::Max,
            resource: None,
            vectors: None,
            stopwords: None,
            vector_threshold: DEFAULT_VECTOR_THRESHOLD,
        }
    }
}

/// Settings for the gap, ranking and retraining experiments, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub corpus: CorpusSource,
    /// Candidate pool for ranking.
    #[serde(default = "default_pool")]
    pub pool: Vec<Split>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<Threshold>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<RankMethod>,
    /// Mention type scored; all types when empty.
    #[serde(default = "default_entity_type")]
    pub entity_type: String,
    /// Adjudicated split that trains the confidence model.
    #[serde(default = "default_test1")]
    pub confidence_train_split: Split,
    /// Split on which the pre-adjudicated model's errors seed similarity ranking.
    #[serde(default = "default_test1")]
    pub error_split: Split,
    #[serde(default)]
    pub length_normalize: bool,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub tagger: TrainConfig,
}

fn default_pool() -> Vec<Split> {
    vec![Split::Train, Split::Dev]
}

fn default_thresholds() -> Vec<Threshold> {
    vec![Threshold::Count(100), Threshold::Count(200), Threshold::Count(500)]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_methods() -> Vec<RankMethod> {
    vec![RankMethod::Random, RankMethod::Confidence, RankMethod::Similarity]
}

fn default_entity_type() -> String {
    "Mutation".into()
}

fn default_test1() -> Split {
    Split::Test1
}

impl ExperimentConfig {
    /// Defaults over the given corpus source.
    pub fn new(corpus: CorpusSource) -> Self {
        Self {
            version: CONFIG_VERSION,
            corpus,
            pool: default_pool(),
            thresholds: default_thresholds(),
            seeds: default_seeds(),
            methods: default_methods(),
            entity_type: default_entity_type(),
            confidence_train_split: Split::Test1,
            error_split: Split::Test1,
            length_normalize: false,
            similarity: SimilarityConfig::default(),
            tagger: TrainConfig::default(),
        }
    }

    pub fn synthetic(synth: SynthConfig) -> Self {
        Self::new(CorpusSource {
            prefix: None,
            synthetic: Some(synth),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.corpus.prefix);
        fix(&mut cfg.similarity.resource);
        fix(&mut cfg.similarity.vectors);
        fix(&mut cfg.similarity.stopwords);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(ExperimentError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        match (&self.corpus.prefix, &self.corpus.synthetic) {
            (Some(_), None) => {}
            (None, Some(s)) => s.validate().map_err(|e| ExperimentError::Config(e.to_string()))?,
            _ => return bad("corpus needs exactly one of `prefix` or `synthetic`"),
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.pool.is_empty() {
            return bad("pool must name at least one split");
        }
        if self.thresholds.is_empty() {
            return bad("at least one threshold is required");
        }
        if self.similarity.method == MethodKind::Embedding && self.similarity.vectors.is_none() {
            return bad("the embedding similarity method needs `similarity.vectors`");
        }
        if !(0.0..=1.0).contains(&self.similarity.vector_threshold) {
            return bad("similarity.vector_threshold must lie in [0, 1]");
        }
        self.tagger
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn entity_filter(&self) -> Option<&str> {
        (!self.entity_type.is_empty()).then_some(self.entity_type.as_str())
    }
}
