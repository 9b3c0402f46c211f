use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use recheck_core::corpus::{parse_conll_str, spans_differ, split_corpus, Annotation, ParallelCorpus, TagMap};
use recheck_core::evaluation::{error_sentences, pct, score_ner, score_ranking, Table};
use recheck_core::experiment::synthetic::{corruption_counts, generate_synthetic, SynthConfig};
use recheck_core::experiment::{
    run_gap_experiment, run_ranking_experiment, run_retraining_experiment, similarity_method, ExperimentConfig,
    SimilarityConfig,
};
use recheck_core::ranking::{rank_by_confidence, rank_by_similarity, rank_random, Aggregation, Ranking};
use recheck_core::similarity::MethodKind;
use recheck_core::tagger::{
    import_external_predictions, predictions_to_tag_map, train as fit, write_predictions, CrfModel,
    SentencePrediction, TrainConfig, PREDICTIONS_SCHEMA,
};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::io::{create_output, open_input, read_conll, read_to_string, Provenance};
use crate::{
    Agg, EvalArgs, Experiment, Method, RankArgs, RankEvalArgs, ServeArgs, SimKind, SimulateArgs, SplitArgs,
    SynthArgs, TagArgs, TrainArgs, UsageError, Version,
};

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn load_corpus(prefix: &Path) -> Result<ParallelCorpus> {
    ParallelCorpus::load(prefix).with_context(|| format!("cannot load corpus {}", prefix.display()))
}

fn load_model(path: &Path) -> Result<CrfModel> {
    CrfModel::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn model_hash(model: &CrfModel) -> String {
    hex::encode(Sha256::digest(model.to_json().as_bytes()))
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => toml::from_str(&read_to_string(p)?).with_context(|| format!("in {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn decode<'a>(model: &CrfModel, sentences: impl IntoIterator<Item = (&'a str, Vec<&'a str>)>) -> Vec<SentencePrediction> {
    let sentences: Vec<(&str, Vec<&str>)> = sentences.into_iter().collect();
    model.decode_all(sentences.iter().map(|(id, w)| (*id, w.as_slice())))
}

fn decode_splits(model: &CrfModel, corpus: &ParallelCorpus, splits: &[recheck_core::corpus::Split]) -> Vec<SentencePrediction> {
    decode(model, corpus.sentences_in(splits).into_iter().map(|s| (s.id.as_str(), s.words())))
}

fn save_corpus(corpus: &ParallelCorpus, out_dir: &Path, prov: Provenance) -> Result<()> {
    let prefix = out_dir.join("corpus");
    corpus.save(&prefix)?;
    let mut outputs = vec![prefix.with_extension("adj.conll"), prefix.with_extension("splits")];
    if out_dir.join("corpus.pre.conll").exists() {
        outputs.insert(1, prefix.with_extension("pre.conll"));
    }
    prov.arg("corpus_hash", corpus.content_hash())
        .write_sidecar(&out_dir.join("provenance.json"), &outputs)
}

fn split_sizes(corpus: &ParallelCorpus) -> String {
    use recheck_core::corpus::Split;
    Split::ALL
        .iter()
        .map(|s| format!("{s} {}", corpus.ids_in(&[*s]).len()))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn split(a: SplitArgs) -> Result<()> {
    let adj = read_conll(&a.input)?;
    let pre = a.pre.as_deref().map(read_conll).transpose()?.unwrap_or_default();
    let ids: Vec<String> = adj.iter().map(|s| s.id.clone()).collect();
    let splits = split_corpus(&ids, a.ratios, a.seed)?;
    let corpus = ParallelCorpus::new(adj, pre, splits)?;
    let prov = Provenance::new("split")
        .path("input", &a.input)
        .arg("pre", a.pre.as_ref().map(|p| p.display().to_string()))
        .arg("ratios", a.ratios.0.to_vec())
        .arg("seed", a.seed);
    save_corpus(&corpus, &a.out_dir, prov)?;
    eprintln!("{} sentences: {}", corpus.len(), split_sizes(&corpus));
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let mut cfg = load_train_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.epochs = epochs;
    }
    let (version, version_name) = match a.annotation {
        Version::Pre => (Annotation::Pre, "pre"),
        Version::Adj => (Annotation::Adj, "adj"),
    };
    let data = corpus.tagged(&a.split.0, version)?;
    let out = fit(&data, &cfg)?;
    out.model.save(&a.model_out)?;
    let names: Vec<&str> = a.split.0.iter().map(|s| s.name()).collect();
    let prov = Provenance::new("train")
        .arg("corpus_hash", corpus.content_hash())
        .arg("annotation", version_name)
        .arg("splits", names)
        .arg("train_config", serde_json::to_value(&cfg)?)
        .arg("model_hash", model_hash(&out.model));
    let sidecar = PathBuf::from(format!("{}.provenance.json", a.model_out.display()));
    prov.write_sidecar(&sidecar, std::slice::from_ref(&a.model_out))?;
    eprintln!(
        "trained on {} sentences, {} features; final loss {:.4}",
        data.len(),
        out.model.num_features(),
        out.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn tag(a: TagArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut prov = Provenance::new("tag").arg("model_hash", model_hash(&model));
    let preds = match (&a.input, &a.corpus) {
        (Some(input), _) => {
            let sentences = read_conll(input)?;
            prov = prov.path("input", input);
            decode(&model, sentences.iter().map(|s| (s.id.as_str(), s.words())))
        }
        (None, Some(prefix)) => {
            let corpus = load_corpus(prefix)?;
            let names: Vec<&str> = a.split.0.iter().map(|s| s.name()).collect();
            prov = prov.arg("corpus_hash", corpus.content_hash()).arg("splits", names);
            decode_splits(&model, &corpus, &a.split.0)
        }
        (None, None) => return Err(usage("tag needs --input or --corpus")),
    };
    let mut w = create_output(&a.out)?;
    write_predictions(&mut w, &preds, &prov.header(PREDICTIONS_SCHEMA))?;
    w.flush()?;
    Ok(())
}

/// Reads predictions as JSON lines when the first non-blank character opens
/// an object, as CoNLL otherwise.
fn read_predictions(path: &Path, gold: &TagMap) -> Result<TagMap> {
    let text = read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        let preds = import_external_predictions(text.as_bytes(), |id| gold.get(id).map(Vec::len))
            .with_context(|| format!("in {}", path.display()))?;
        Ok(predictions_to_tag_map(&preds))
    } else {
        let sentences = parse_conll_str(&text).with_context(|| format!("in {}", path.display()))?;
        Ok(sentences.into_iter().map(|s| (s.id, s.tags)).collect())
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let gold: TagMap = if a.gold == Path::new("-") || a.gold.is_file() {
        read_conll(&a.gold)?.into_iter().map(|s| (s.id, s.tags)).collect()
    } else {
        load_corpus(&a.gold)?.tag_map(&a.split.0, Annotation::Adj)?
    };
    let pred = read_predictions(&a.pred, &gold)?;
    let filter = a.entity_type.as_deref();
    let s = score_ner(&gold, &pred, filter)?;
    let mut table = Table::new(
        format!("NER evaluation over {} sentences", gold.len()),
        &["Type", "P", "R", "F", "TP", "FP", "FN"],
    );
    table.push(vec![
        filter.unwrap_or("all").to_string(),
        pct(s.precision),
        pct(s.recall),
        pct(s.f1),
        s.tp.to_string(),
        s.fp.to_string(),
        s.fn_.to_string(),
    ]);
    print!("{}", table.render());
    if let Some(path) = &a.json {
        let prov = Provenance::new("eval")
            .path("gold", &a.gold)
            .path("pred", &a.pred)
            .arg("type", filter);
        let mut v = prov.header("recheck/ner-score/v1");
        v["score"] = serde_json::to_value(s)?;
        let mut w = create_output(path)?;
        writeln!(w, "{}", serde_json::to_string_pretty(&v)?)?;
        w.flush()?;
    }
    Ok(())
}

fn read_ids(path: &Path, corpus: &ParallelCorpus) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        let id = line.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        if !corpus.contains(id) {
            bail!("{} line {}: unknown sentence id {id}", path.display(), i + 1);
        }
        out.insert(id.to_string());
    }
    Ok(out)
}

pub fn rank(a: RankArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let pool = corpus.ids_in(&a.pool.0);
    let names: Vec<&str> = a.pool.0.iter().map(|s| s.name()).collect();
    let mut ranking = match a.method {
        Method::Random => rank_random(&pool, a.seed)?,
        Method::Confidence => {
            let preds = match (&a.predictions, &a.model) {
                (Some(p), _) => import_external_predictions(open_input(p)?, |id| corpus.sentence(id).map(|s| s.len()))
                    .with_context(|| format!("in {}", p.display()))?,
                (None, Some(m)) => decode_splits(&load_model(m)?, &corpus, &a.pool.0),
                (None, None) => return Err(usage("--method confidence needs --predictions or --model")),
            };
            rank_by_confidence(&preds, &pool, a.length_normalize)?
        }
        Method::Similarity => {
            let errors = match (&a.errors, &a.model) {
                (Some(p), _) => read_ids(p, &corpus)?,
                (None, Some(m)) => {
                    let model = load_model(m)?;
                    let gold = corpus.tag_map(&[a.error_split], Annotation::Adj)?;
                    let pred = predictions_to_tag_map(&decode_splits(&model, &corpus, &[a.error_split]));
                    error_sentences(&gold, &pred, a.entity_type.as_deref())?
                }
                (None, None) => return Err(usage("--method similarity needs --errors or --model")),
            };
            if errors.is_empty() {
                bail!("there are no error sentences to rank against");
            }
            let cfg = SimilarityConfig {
                method: match a.similarity {
                    SimKind::Alignment => MethodKind::Alignment,
                    SimKind::Embedding => MethodKind::Embedding,
                },
                aggregation: match a.aggregation {
                    Agg::Max => Aggregation::Max,
                    Agg::Mean => Aggregation::Mean,
                },
                resource: a.resource.clone(),
                vectors: a.vectors.clone(),
                stopwords: a.stopwords.clone(),
                vector_threshold: a.vector_threshold,
            };
            let method = similarity_method(&cfg)?;
            let error_tokens: Vec<(&str, Vec<&str>)> = errors
                .iter()
                .map(|id| (id.as_str(), corpus.sentence(id).expect("checked above").words()))
                .collect();
            let pool_tokens: Vec<(&str, Vec<&str>)> = corpus
                .sentences_in(&a.pool.0)
                .into_iter()
                .map(|s| (s.id.as_str(), s.words()))
                .collect();
            let mut r = rank_by_similarity(&error_tokens, &pool_tokens, &method, cfg.aggregation)?;
            r.provenance.insert("similarity".into(), serde_json::to_value(&cfg)?);
            r.provenance.insert("error_count".into(), errors.len().into());
            r
        }
    };
    ranking.provenance.insert("corpus_hash".into(), corpus.content_hash().into());
    ranking.provenance.insert("pool".into(), json!(names));
    let mut w = create_output(&a.out)?;
    ranking.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn rank_eval(a: RankEvalArgs) -> Result<()> {
    let ranking = Ranking::read_jsonl(open_input(&a.ranking)?).with_context(|| format!("in {}", a.ranking.display()))?;
    let corpus = load_corpus(&a.corpus)?;
    let mut discrepant = BTreeSet::new();
    for id in ranking.ids() {
        let adj = corpus
            .adjudicated(id)
            .with_context(|| format!("ranked sentence {id} is not in the corpus"))?;
        let pre = corpus
            .pre_adjudicated(id)
            .with_context(|| format!("sentence {id} has no pre-adjudicated labels"))?;
        if spans_differ(pre, adj) {
            discrepant.insert(id.to_string());
        }
    }
    let ids = ranking.ids();
    let mut table = Table::new(
        format!(
            "Ranking evaluation: {} ({} of {} sentences discrepant)",
            ranking.method.name(),
            discrepant.len(),
            ids.len()
        ),
        &["k", "Hits", "P", "R", "F"],
    );
    for t in &a.thresholds.0 {
        let k = t.resolve(ids.len())?;
        let s = score_ranking(&ids, &discrepant, k)?;
        table.push(vec![
            if matches!(t, recheck_core::experiment::Threshold::Percent(_)) {
                format!("{t} ({k})")
            } else {
                k.to_string()
            },
            s.hits.to_string(),
            pct(s.precision),
            pct(s.recall),
            pct(s.f1),
        ]);
    }
    print!("{}", table.render());
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let report = match a.experiment {
        Experiment::Gap => run_gap_experiment(&cfg),
        Experiment::Ranking => run_ranking_experiment(&cfg),
        Experiment::Retraining => run_retraining_experiment(&cfg),
    }?;
    print!("{}", report.render());
    if let Some(out) = &a.out {
        let mut w = create_output(out)?;
        writeln!(w, "{}", report.to_json())?;
        w.flush()?;
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        spurious: a.spurious,
        ..SynthConfig::new(a.n, a.rho)
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = generate_synthetic(&cfg, a.seed)?;
    let counts = corruption_counts(&corpus);
    let prov = Provenance::new("synth")
        .arg("synthetic", serde_json::to_value(&cfg)?)
        .arg("seed", a.seed)
        .arg("corruptions", serde_json::to_value(&counts)?);
    save_corpus(&corpus, &a.out_dir, prov)?;
    eprintln!("{} sentences: {}", corpus.len(), split_sizes(&corpus));
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let ranking = Ranking::read_jsonl(open_input(&a.ranking)?).with_context(|| format!("in {}", a.ranking.display()))?;
    let predictions = match &a.predictions {
        Some(p) => import_external_predictions(open_input(p)?, |id| corpus.sentence(id).map(|s| s.len()))
            .with_context(|| format!("in {}", p.display()))?,
        None => Vec::new(),
    };
    let cfg = load_train_config(a.train_config.as_deref())?;
    let log = a.log.clone().unwrap_or_else(|| {
        a.ranking
            .parent()
            .unwrap_or(Path::new(""))
            .join("adjudications.jsonl")
    });
    let queued = ranking.len();
    let triage = recheck_service::Triage::new(corpus, ranking)?
        .with_predictions(predictions)
        .with_log_file(&log)?
        .with_retrainer(recheck_service::default_retrainer(cfg, a.entity_type.clone()));
    let addr = SocketAddr::new(a.host, a.port);
    let runtime = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    eprintln!("serving {queued} ranked sentences on http://{addr} (log {})", log.display());
    runtime
        .block_on(recheck_service::serve(addr, triage))
        .with_context(|| format!("cannot serve on {addr}"))
}
