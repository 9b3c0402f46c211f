//! Experiment pipelines: how much single annotation costs the tagger, how
//! well each ranking finds discrepant sentences, and how much fixing the
//! top-ranked ones recovers.
//!
//! Every run is keyed by `(condition, split or threshold, seed)`; summaries
//! are means and population standard deviations over seeds. Synthetic
//! corpora are regenerated per seed, so a seed fixes the corpus, its splits,
//! the tagger's shuffling and the random ranking alike.

mod config;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{CorpusSource, ExperimentConfig, SimilarityConfig, Threshold, CONFIG_VERSION};
pub use synthetic::{generate_synthetic, SynthConfig};

use crate::corpus::{Annotation, BioTag, CorpusError, ParallelCorpus, Split, TagMap};
use crate::evaluation::{
    aggregate, error_sentences, pct, score_ner, score_ranking, EvalError, MetricSummary, NerScore,
    Table,
};
use crate::ranking::{
    rank_by_confidence, rank_by_similarity, rank_random, RankMethod, Ranking, RankingError,
    TOOL_VERSION,
};
use crate::similarity::{
    Aligner, LexicalResource, MethodKind, SimilarityError, SimilarityMethod, Stopwords, WordVectors,
};
use crate::tagger::{predictions_to_tag_map, train, CrfModel, TaggerError, TrainConfig};

pub const REPORT_SCHEMA: &str = "recheck/report/v1";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("seed {seed}: the pre-adjudicated model makes no errors on {split}, so there is nothing to rank by similarity")]
    NoErrorSentences { seed: u64, split: Split },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Gap,
    Ranking,
    Retraining,
}

/// One scored run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Runs of one condition summarized over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Corpus content hash per seed.
    pub corpus_hashes: BTreeMap<u64, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub kind: ReportKind,
    pub provenance: Provenance,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    /// Derived quantities such as F-score gaps.
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

impl ExperimentReport {
    fn assemble(
        kind: ReportKind,
        config: &ExperimentConfig,
        corpus_hashes: BTreeMap<u64, String>,
        runs: Vec<RunRecord>,
    ) -> Result<Self, ExperimentError> {
        let mut groups: IndexMap<(String, Option<Split>, Option<usize>), Vec<NerScore>> = IndexMap::new();
        for r in &runs {
            groups
                .entry((r.condition.clone(), r.split, r.threshold))
                .or_default()
                .push(NerScore {
                    precision: r.precision,
                    recall: r.recall,
                    f1: r.f1,
                    tp: 0,
                    fp: 0,
                    fn_: 0,
                });
        }
        let summary = groups
            .into_iter()
            .map(|((condition, split, threshold), scores)| {
                let a = aggregate(&scores)?;
                Ok(SummaryRow {
                    condition,
                    split,
                    threshold,
                    precision: a.precision,
                    recall: a.recall,
                    f1: a.f1,
                    runs: a.runs,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(Self {
            schema: REPORT_SCHEMA.into(),
            kind,
            provenance: Provenance {
                tool_version: TOOL_VERSION.into(),
                config_hash: config.hash(),
                seeds: config.seeds.clone(),
                corpus_hashes,
            },
            runs,
            summary,
            values: BTreeMap::new(),
        })
    }

    pub fn row(&self, condition: &str, split: Option<Split>, threshold: Option<usize>) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.condition == condition && r.split == split && r.threshold == threshold)
    }

    /// Runs of one condition in seed order.
    pub fn runs_of(&self, condition: &str, threshold: Option<usize>) -> Vec<&RunRecord> {
        self.runs
            .iter()
            .filter(|r| r.condition == condition && r.threshold == threshold)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table of the summary, percentages as `mean (std)`.
    pub fn render(&self) -> String {
        let title = match self.kind {
            ReportKind::Gap => "NER scores by training annotation (micro-averaged, exact span match)",
            ReportKind::Ranking => "Discrepant sentences found in the top-k of each ranking",
            ReportKind::Retraining => "NER scores on test2 after fixing the top-k ranked training sentences",
        };
        let first = match self.kind {
            ReportKind::Gap => "Training labels",
            ReportKind::Ranking => "Method",
            ReportKind::Retraining => "Condition",
        };
        let second = match self.kind {
            ReportKind::Gap => "Evaluated on",
            _ => "Top-k",
        };
        let mut t = Table::new(title, &[first, second, "P (std)", "R (std)", "F (std)", "Runs"]);
        let cell = |m: &MetricSummary| format!("{} ({})", pct(m.mean), pct(m.std));
        for r in &self.summary {
            let where_ = match (r.split, r.threshold) {
                (Some(s), _) => s.to_string(),
                (None, Some(k)) => k.to_string(),
                (None, None) => String::new(),
            };
            t.push(vec![
                r.condition.clone(),
                where_,
                cell(&r.precision),
                cell(&r.recall),
                cell(&r.f1),
                r.runs.to_string(),
            ]);
        }
        let mut out = t.render();
        for (k, v) in &self.values {
            out.push_str(&format!("{k}: {v:.4}\n"));
        }
        out.push_str(&format!(
            "tool {} | config {} | seeds {:?}\n",
            self.provenance.tool_version,
            &self.provenance.config_hash[..12],
            self.provenance.seeds
        ));
        out
    }
}

/// Supplies the corpus for each seed: the synthetic generator's output, or
/// one corpus loaded from disk.
pub struct CorpusProvider {
    fixed: Option<ParallelCorpus>,
    synth: Option<SynthConfig>,
}

impl CorpusProvider {
    pub fn new(source: &CorpusSource) -> Result<Self, ExperimentError> {
        match (&source.prefix, &source.synthetic) {
            (Some(p), None) => Ok(Self {
                fixed: Some(ParallelCorpus::load(p)?),
                synth: None,
            }),
            (None, Some(s)) => Ok(Self {
                fixed: None,
                synth: Some(s.clone()),
            }),
            _ => Err(ExperimentError::Config(
                "corpus needs exactly one of `prefix` or `synthetic`".into(),
            )),
        }
    }

    pub fn from_corpus(corpus: ParallelCorpus) -> Self {
        Self {
            fixed: Some(corpus),
            synth: None,
        }
    }

    pub fn corpus(&self, seed: u64) -> Result<std::borrow::Cow<'_, ParallelCorpus>, ExperimentError> {
        match (&self.fixed, &self.synth) {
            (Some(c), _) => Ok(std::borrow::Cow::Borrowed(c)),
            (None, Some(s)) => Ok(std::borrow::Cow::Owned(generate_synthetic(s, seed)?)),
            (None, None) => unreachable!("constructed with a source"),
        }
    }
}

/// Trains on one annotation version of `splits`.
pub fn train_model(
    corpus: &ParallelCorpus,
    splits: &[Split],
    version: Annotation,
    config: &TrainConfig,
) -> Result<CrfModel, ExperimentError> {
    let data = corpus.tagged(splits, version)?;
    Ok(train(&data, config)?.model)
}

/// Decodes the sentences of `splits` into an id → labels map.
pub fn predict_map(model: &CrfModel, corpus: &ParallelCorpus, splits: &[Split]) -> TagMap {
    let sentences = corpus.sentences_in(splits);
    let words: Vec<Vec<&str>> = sentences.iter().map(|s| s.words()).collect();
    let preds = model.decode_all(sentences.iter().zip(&words).map(|(s, w)| (s.id.as_str(), w.as_slice())));
    predictions_to_tag_map(&preds)
}

/// Scores `model` against the adjudicated labels of `split`.
pub fn evaluate_model(
    model: &CrfModel,
    corpus: &ParallelCorpus,
    split: Split,
    filter: Option<&str>,
) -> Result<NerScore, ExperimentError> {
    let gold = corpus.tag_map(&[split], Annotation::Adj)?;
    let pred = predict_map(model, corpus, &[split]);
    Ok(score_ner(&gold, &pred, filter)?)
}

/// Trains on the pre-adjudicated train split (after any overrides the
/// corpus carries) and scores on adjudicated test2.
pub fn retrain_and_evaluate(
    corpus: &ParallelCorpus,
    config: &TrainConfig,
    filter: Option<&str>,
) -> Result<NerScore, ExperimentError> {
    let model = train_model(corpus, &[Split::Train], Annotation::Pre, config)?;
    evaluate_model(&model, corpus, Split::Test2, filter)
}

/// Replaces the pre-adjudicated labels of the train-split ids among `ids`
/// with their adjudicated labels. Ids outside the train split are ignored.
pub fn apply_fixes<'a>(
    corpus: &ParallelCorpus,
    ids: impl IntoIterator<Item = &'a str>,
) -> Result<ParallelCorpus, ExperimentError> {
    let fixes: Vec<(&str, &[BioTag])> = ids
        .into_iter()
        .filter(|id| corpus.split(id) == Some(Split::Train))
        .filter_map(|id| corpus.adjudicated(id).map(|t| (id, t)))
        .collect();
    Ok(corpus.with_pre_overrides(fixes)?)
}

/// Builds the similarity method named by `config`, loading its files.
pub fn similarity_method(config: &SimilarityConfig) -> Result<SimilarityMethod, ExperimentError> {
    let vectors = config.vectors.as_ref().map(WordVectors::load).transpose()?;
    match config.method {
        MethodKind::Embedding => Ok(SimilarityMethod::Embedding(vectors.ok_or_else(|| {
            ExperimentError::Config("the embedding method needs word vectors".into())
        })?)),
        MethodKind::Alignment => {
            let resource = match &config.resource {
                Some(p) => LexicalResource::load(p)?,
                None => LexicalResource::new(),
            };
            let stopwords = match &config.stopwords {
                Some(p) => Stopwords::load(p)?,
                None => Stopwords::default(),
            };
            let mut aligner = Aligner::new(resource)
                .with_stopwords(stopwords)
                .with_threshold(config.vector_threshold);
            aligner.vectors = vectors;
            Ok(SimilarityMethod::Alignment(aligner))
        }
    }
}

/// Sentences on which a model trained on pre-adjudicated train labels errs
/// against the adjudicated labels of `split`.
pub fn error_set(
    corpus: &ParallelCorpus,
    split: Split,
    config: &TrainConfig,
    filter: Option<&str>,
) -> Result<BTreeSet<String>, ExperimentError> {
    let model = train_model(corpus, &[Split::Train], Annotation::Pre, config)?;
    let gold = corpus.tag_map(&[split], Annotation::Adj)?;
    let pred = predict_map(&model, corpus, &[split]);
    Ok(error_sentences(&gold, &pred, filter)?)
}

/// Builds one ranking of the configured pool.
pub fn build_ranking(
    method: RankMethod,
    corpus: &ParallelCorpus,
    config: &ExperimentConfig,
    similarity: &SimilarityMethod,
    seed: u64,
) -> Result<Ranking, ExperimentError> {
    let pool = corpus.ids_in(&config.pool);
    let tagger = config.tagger.with_seed(seed);
    let mut ranking = match method {
        RankMethod::Random => rank_random(&pool, seed)?,
        RankMethod::Confidence => {
            let model = train_model(corpus, &[config.confidence_train_split], Annotation::Adj, &tagger)?;
            let sentences = corpus.sentences_in(&config.pool);
            let words: Vec<Vec<&str>> = sentences.iter().map(|s| s.words()).collect();
            let preds = model.decode_all(sentences.iter().zip(&words).map(|(s, w)| (s.id.as_str(), w.as_slice())));
            let mut r = rank_by_confidence(&preds, &pool, config.length_normalize)?;
            r.provenance.insert("model_split".into(), config.confidence_train_split.name().into());
            r
        }
        RankMethod::Similarity => {
            let errors = error_set(corpus, config.error_split, &tagger, config.entity_filter())?;
            if errors.is_empty() {
                return Err(ExperimentError::NoErrorSentences {
                    seed,
                    split: config.error_split,
                });
            }
            let error_tokens: Vec<(&str, Vec<&str>)> = errors
                .iter()
                .map(|id| (id.as_str(), corpus.sentence(id).expect("error ids come from the corpus").words()))
                .collect();
            let pool_tokens: Vec<(&str, Vec<&str>)> = corpus
                .sentences_in(&config.pool)
                .into_iter()
                .map(|s| (s.id.as_str(), s.words()))
                .collect();
            let mut r = rank_by_similarity(&error_tokens, &pool_tokens, similarity, config.similarity.aggregation)?;
            r.provenance.insert("error_split".into(), config.error_split.name().into());
            r
        }
    };
    ranking.provenance.insert("seed".into(), seed.into());
    ranking.provenance.insert("corpus_hash".into(), corpus.content_hash().into());
    Ok(ranking)
}

fn record(condition: &str, split: Option<Split>, threshold: Option<usize>, seed: u64, p: f64, r: f64, f: f64) -> RunRecord {
    RunRecord {
        condition: condition.to_string(),
        split,
        threshold,
        seed,
        precision: p,
        recall: r,
        f1: f,
    }
}

fn ner_record(condition: &str, split: Option<Split>, threshold: Option<usize>, seed: u64, s: &NerScore) -> RunRecord {
    record(condition, split, threshold, seed, s.precision, s.recall, s.f1)
}

/// Runs `per_seed` for every configured seed in parallel, keeping seed order.
fn over_seeds<F>(config: &ExperimentConfig, per_seed: F) -> Result<(BTreeMap<u64, String>, Vec<RunRecord>), ExperimentError>
where
    F: Fn(&ParallelCorpus, u64) -> Result<Vec<RunRecord>, ExperimentError> + Sync,
{
    config.validate()?;
    let provider = CorpusProvider::new(&config.corpus)?;
    let results: Vec<(u64, String, Vec<RunRecord>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let corpus = provider.corpus(seed)?;
            let runs = per_seed(&corpus, seed)?;
            Ok((seed, corpus.content_hash(), runs))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut hashes = BTreeMap::new();
    let mut runs = Vec::new();
    for (seed, hash, r) in results {
        hashes.insert(seed, hash);
        runs.extend(r);
    }
    // Group runs by condition for readability, seed order within each.
    let mut order: IndexMap<(String, Option<Split>, Option<usize>), Vec<RunRecord>> = IndexMap::new();
    for r in runs {
        order.entry((r.condition.clone(), r.split, r.threshold)).or_default().push(r);
    }
    Ok((hashes, order.into_values().flatten().collect()))
}

/// Trains on adjudicated and on pre-adjudicated train labels and scores both
/// on adjudicated test2 and test1.
pub fn run_gap_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let filter = config.entity_filter();
    let (hashes, runs) = over_seeds(config, |corpus, seed| {
        let tagger = config.tagger.with_seed(seed);
        let mut out = Vec::new();
        for (name, version) in [("adjudicated", Annotation::Adj), ("pre-adjudicated", Annotation::Pre)] {
            let model = train_model(corpus, &[Split::Train], version, &tagger)?;
            for split in [Split::Test2, Split::Test1] {
                let s = evaluate_model(&model, corpus, split, filter)?;
                out.push(ner_record(name, Some(split), None, seed, &s));
            }
        }
        Ok(out)
    })?;
    let mut report = ExperimentReport::assemble(ReportKind::Gap, config, hashes, runs)?;
    for split in [Split::Test2, Split::Test1] {
        let adj = report.row("adjudicated", Some(split), None).map(|r| r.f1.mean);
        let pre = report.row("pre-adjudicated", Some(split), None).map(|r| r.f1.mean);
        if let (Some(a), Some(p)) = (adj, pre) {
            report.values.insert(format!("f1_gap_{split}"), a - p);
        }
    }
    Ok(report)
}

/// Scores each configured ranking at each threshold against the pool's
/// discrepant sentences, plus the whole pool as an "All" row.
pub fn run_ranking_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let similarity = similarity_method(&config.similarity)?;
    let (hashes, runs) = over_seeds(config, |corpus, seed| {
        let pool = corpus.ids_in(&config.pool);
        let discrepant = crate::corpus::discrepant_ids(corpus, &config.pool)?;
        let ks = config
            .thresholds
            .iter()
            .map(|t| t.resolve(pool.len()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        for &method in &config.methods {
            let ranking = build_ranking(method, corpus, config, &similarity, seed)?;
            let ids = ranking.ids();
            for &k in &ks {
                let s = score_ranking(&ids, &discrepant, k)?;
                out.push(record(method.name(), None, Some(k), seed, s.precision, s.recall, s.f1));
            }
        }
        let s = score_ranking(&pool, &discrepant, pool.len())?;
        out.push(record("All", None, Some(pool.len()), seed, s.precision, s.recall, s.f1));
        Ok(out)
    })?;
    ExperimentReport::assemble(ReportKind::Ranking, config, hashes, runs)
}

/// Retrains after fixing the top-k ranked train sentences, for each method
/// and threshold, between the "check none" and "check all" endpoints.
pub fn run_retraining_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let similarity = similarity_method(&config.similarity)?;
    let filter = config.entity_filter();
    let (hashes, runs) = over_seeds(config, |corpus, seed| {
        let tagger = config.tagger.with_seed(seed);
        let pool = corpus.ids_in(&config.pool);
        let ks = config
            .thresholds
            .iter()
            .map(|t| t.resolve(pool.len()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        let none = retrain_and_evaluate(corpus, &tagger, filter)?;
        out.push(ner_record("check-none", None, Some(0), seed, &none));
        for &method in &config.methods {
            let ranking = build_ranking(method, corpus, config, &similarity, seed)?;
            let ids = ranking.ids();
            for &k in &ks {
                let fixed = apply_fixes(corpus, ids[..k].iter().copied())?;
                let s = retrain_and_evaluate(&fixed, &tagger, filter)?;
                out.push(ner_record(method.name(), None, Some(k), seed, &s));
            }
        }
        let all = apply_fixes(corpus, pool.iter().copied())?;
        let s = retrain_and_evaluate(&all, &tagger, filter)?;
        out.push(ner_record("check-all", None, Some(pool.len()), seed, &s));
        Ok(out)
    })?;
    ExperimentReport::assemble(ReportKind::Retraining, config, hashes, runs)
}
