//! Templated mutation-mention corpora with controlled annotation misses.
//!
//! Two kinds of mention appear. Nomenclature mentions (`V600E`,
//! `c.1799T>A`) follow a regular shape. Descriptive mentions
//! (`exon 19 deletion`, `missense mutations`) reuse words that elsewhere occur
//! unlabeled, so they are harder to tag. The pre-adjudicated version misses
//! or truncates the descriptive mention of exactly `⌈ρ·n⌉` sentences, drawn
//! among sentences built from descriptive templates.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    split_corpus, tags_from_spans, BioTag, CorpusError, MentionSpan, ParallelCorpus, SplitRatios,
    TaggedSentence,
};

pub const ENTITY_TYPE: &str = "Mutation";

const GENES: &[&str] = &[
    "BRAF", "KRAS", "EGFR", "TP53", "PIK3CA", "NRAS", "IDH1", "JAK2", "KIT", "ALK", "BRCA1",
    "PTEN", "FLT3", "NPM1", "ERBB2", "MET",
];
const AMINO: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
const BASES: &[u8] = b"ACGT";

const DESCRIPTIVE: &[&str] = &[
    "exon 19 deletion",
    "exon 20 insertions",
    "missense mutations",
    "point mutation",
    "frameshift insertion",
    "internal tandem duplication",
    "truncating mutations",
    "in-frame deletion",
    "nonsense mutation",
    "activating mutations",
    "splice site mutation",
    "loss-of-function mutations",
];

// `{G}` gene, `{M}` nomenclature mention, `{H}` descriptive mention, `{N}` number.
const NOMENCLATURE_TEMPLATES: &[&str] = &[
    "The {G} {M} mutation was detected in {N} patients .",
    "Patients harboring {G} {M} responded to targeted therapy .",
    "We identified {M} in the {G} kinase domain .",
    "{G} {M} was associated with poor prognosis .",
    "Sequencing revealed a {M} substitution in {G} .",
    "The {M} variant of {G} was present in {N} tumors .",
];
const DESCRIPTIVE_TEMPLATES: &[&str] = &[
    "{G} {H} were observed in {N} tumors .",
    "Tumors with {H} in {G} showed drug resistance .",
    "We detected {H} of {G} in {N} cases .",
    "{H} in {G} are frequent in this cohort .",
    "The frequency of {G} {H} was {N} % .",
    "Carriers of {H} in {G} had shorter survival .",
];
const PLAIN_TEMPLATES: &[&str] = &[
    "No mutation analysis was performed for {G} .",
    "Mutation status was unknown in {N} patients .",
    "Samples were screened for {G} expression by deletion mapping .",
    "Clinical data were collected from {N} centers .",
    "The {G} gene encodes a receptor tyrosine kinase .",
    "Insertion of the vector restored {G} function in {N} lines .",
    "Survival did not differ between the {N} treatment groups .",
    "The frequency of {G} amplification was {N} % .",
];

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Sentence count, at least 20.
    pub n: usize,
    /// Fraction of sentences whose pre-adjudicated labels are corrupted, in (0, 1).
    pub rho: f64,
    /// Share of uncorrupted sentences that use descriptive templates.
    pub descriptive_fraction: f64,
    /// Share of uncorrupted sentences that use nomenclature templates.
    pub nomenclature_fraction: f64,
    /// Let some corruptions add a spurious mention instead of dropping one.
    pub spurious: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            rho: 0.15,
            descriptive_fraction: 0.12,
            nomenclature_fraction: 0.4,
            spurious: false,
        }
    }
}

impl SynthConfig {
    pub fn new(n: usize, rho: f64) -> Self {
        Self {
            n,
            rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidRatios(m));
        if self.n < 20 {
            return bad(format!("synthetic corpus needs at least 20 sentences, got {}", self.n));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        let (d, m) = (self.descriptive_fraction, self.nomenclature_fraction);
        if !(0.0..=1.0).contains(&d) || !(0.0..=1.0).contains(&m) || d + m > 1.0 {
            return bad("template fractions must be in [0, 1] and sum to at most 1".into());
        }
        Ok(())
    }

    /// `⌈ρ·n⌉`, ignoring floating-point noise below 1e-9.
    pub fn corrupted_count(&self) -> usize {
        ((self.rho * self.n as f64) - 1e-9).ceil() as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Nomenclature,
    Descriptive,
    Plain,
}

/// Builds a corpus deterministically from `seed`, split 40/40/10/10.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<ParallelCorpus, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n;
    let mut corrupted = vec![false; n];
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut rng);
    for &p in &positions[..config.corrupted_count()] {
        corrupted[p] = true;
    }

    let mut adj = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let (mut doc, mut ordinal, mut doc_len) = (0usize, 0usize, rng.random_range(6..=10));
    for &bad in &corrupted {
        if ordinal == doc_len {
            doc += 1;
            ordinal = 0;
            doc_len = rng.random_range(6..=10);
        }
        let id = format!("d{doc}:s{ordinal}");
        ordinal += 1;
        let kind = if bad {
            Kind::Descriptive
        } else {
            let u: f64 = rng.random();
            if u < config.descriptive_fraction {
                Kind::Descriptive
            } else if u < config.descriptive_fraction + config.nomenclature_fraction {
                Kind::Nomenclature
            } else {
                Kind::Plain
            }
        };
        let (tokens, spans) = instantiate(kind, &mut rng);
        let gold = tags_from_spans(tokens.len(), &spans);
        let noisy = if bad {
            corrupt(&tokens, &spans, config.spurious, &mut rng)
        } else {
            gold.clone()
        };
        adj.push(TaggedSentence::new(id.clone(), tokens.clone(), gold)?);
        pre.push(TaggedSentence::new(id, tokens, noisy)?);
    }
    let ids: Vec<String> = adj.iter().map(|s| s.id.clone()).collect();
    // Drawn from the stream so the split shuffle is independent of the
    // corruption shuffle above.
    let splits = split_corpus(&ids, SplitRatios::default(), rng.random())?;
    ParallelCorpus::new(adj, pre, splits)
}

fn instantiate(kind: Kind, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<MentionSpan>) {
    let templates = match kind {
        Kind::Nomenclature => NOMENCLATURE_TEMPLATES,
        Kind::Descriptive => DESCRIPTIVE_TEMPLATES,
        Kind::Plain => PLAIN_TEMPLATES,
    };
    let template = templates.choose(rng).expect("templates are non-empty");
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for slot in template.split(' ') {
        match slot {
            "{G}" => tokens.push(GENES.choose(rng).unwrap().to_string()),
            "{N}" => tokens.push(rng.random_range(2..200).to_string()),
            "{M}" => {
                spans.push(MentionSpan::new(tokens.len(), tokens.len(), ENTITY_TYPE));
                tokens.push(nomenclature(rng));
            }
            "{H}" => {
                let words: Vec<&str> = DESCRIPTIVE.choose(rng).unwrap().split(' ').collect();
                let start = tokens.len();
                tokens.extend(words.iter().map(|w| w.to_string()));
                spans.push(MentionSpan::new(start, tokens.len() - 1, ENTITY_TYPE));
            }
            word => tokens.push(word.to_string()),
        }
    }
    (tokens, spans)
}

fn nomenclature(rng: &mut ChaCha8Rng) -> String {
    let aa = |rng: &mut ChaCha8Rng| AMINO[rng.random_range(0..AMINO.len())] as char;
    let base = |rng: &mut ChaCha8Rng| BASES[rng.random_range(0..BASES.len())] as char;
    if rng.random_bool(0.75) {
        let (a, b) = (aa(rng), aa(rng));
        format!("{a}{}{b}", rng.random_range(2..1000))
    } else {
        let (a, b) = (base(rng), base(rng));
        format!("c.{}{a}>{b}", rng.random_range(10..3000))
    }
}

/// Drops or truncates one mention; with `spurious`, sometimes labels the
/// gene token instead.
fn corrupt(tokens: &[String], spans: &[MentionSpan], spurious: bool, rng: &mut ChaCha8Rng) -> Vec<BioTag> {
    let target = rng.random_range(0..spans.len());
    let mut kept: Vec<MentionSpan> = spans.to_vec();
    if spurious && rng.random_bool(0.3) {
        let occupied = |i: usize| spans.iter().any(|s| s.start <= i && i <= s.end);
        let free: Vec<usize> = (0..tokens.len())
            .filter(|&i| !occupied(i) && GENES.contains(&tokens[i].as_str()))
            .collect();
        if let Some(&i) = free.choose(rng) {
            kept.push(MentionSpan::new(i, i, ENTITY_TYPE));
            kept.sort();
            return tags_from_spans(tokens.len(), &kept);
        }
    }
    let span = kept.remove(target);
    if span.len() > 1 && rng.random_bool(0.3) {
        let shrunk = if rng.random_bool(0.5) {
            MentionSpan::new(span.start + 1, span.end, ENTITY_TYPE)
        } else {
            MentionSpan::new(span.start, span.end - 1, ENTITY_TYPE)
        };
        kept.push(shrunk);
        kept.sort();
    }
    tags_from_spans(tokens.len(), &kept)
}

/// Sentence counts by how the pre-adjudicated mentions differ from the
/// adjudicated ones.
pub fn corruption_counts(corpus: &ParallelCorpus) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for s in corpus.sentences() {
        let pre = corpus.spans(&s.id, crate::corpus::Annotation::Pre).unwrap_or_default();
        let adj = corpus.spans(&s.id, crate::corpus::Annotation::Adj).unwrap_or_default();
        let key = match pre.len().cmp(&adj.len()) {
            std::cmp::Ordering::Less => "dropped",
            std::cmp::Ordering::Greater => "spurious",
            std::cmp::Ordering::Equal if pre != adj => "shrunk",
            std::cmp::Ordering::Equal => "unchanged",
        };
        *out.entry(key).or_insert(0) += 1;
    }
    out
}
