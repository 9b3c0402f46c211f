//! Maximum-likelihood CRF training by mini-batch gradient ascent.

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::extract_features;
use super::model::{CrfModel, EncodedSentence};
use super::TaggerError;
use crate::corpus::{BioTag, TaggedSentence};

/// Optimizer settings.
///
/// The objective is `Σ log Pr(gold | sentence) − l2·‖w‖²`. Each mini-batch
/// takes a step along the batch-mean log-likelihood gradient followed by a
/// proximal L2 shrink, with step size `learning_rate / (1 + decay·epoch)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub l2: f64,
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            l2: 0.1,
            learning_rate: 0.1,
            decay: 0.05,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        let bad = |m: &str| Err(TaggerError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return bad("l2 must be finite and non-negative");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.decay >= 0.0) {
            return bad("decay must be non-negative");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// A trained model and its per-epoch training loss
/// (`−Σ log-likelihood + l2·‖w‖²`, evaluated after each epoch).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CrfModel,
    pub loss_trace: Vec<f64>,
}

/// One training example in model index space.
pub type Example = (EncodedSentence, Vec<usize>);

/// Builds the tag set and feature vocabulary from `sentences` and fits a model.
///
/// Tags are ordered `O` first, then lexicographically; features in order of
/// first occurrence.
pub fn train(sentences: &[TaggedSentence], config: &TrainConfig) -> Result<TrainOutcome, TaggerError> {
    config.validate()?;
    if sentences.is_empty() {
        return Err(TaggerError::EmptyTrainingSet);
    }
    let mut tag_set: Vec<BioTag> = sentences
        .iter()
        .flat_map(|s| s.tags.iter().cloned())
        .filter(|t| !t.is_outside())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    tag_set.insert(0, BioTag::Outside);

    let mut vocab: IndexSet<String> = IndexSet::new();
    let mut raw: Vec<Vec<Vec<usize>>> = Vec::with_capacity(sentences.len());
    for s in sentences {
        if s.tags.len() != s.tokens.len() {
            return Err(TaggerError::LengthMismatch {
                id: s.id.clone(),
                expected: s.tokens.len(),
                found: s.tags.len(),
            });
        }
        let words = s.words();
        raw.push(
            (0..words.len())
                .map(|i| {
                    extract_features(&words, i)
                        .into_iter()
                        .map(|f| vocab.insert_full(f).0)
                        .collect()
                })
                .collect(),
        );
    }
    let mut model = CrfModel::new(tag_set, vocab)?;
    let data: Vec<Example> = sentences
        .iter()
        .zip(raw)
        .map(|(s, positions)| {
            let gold = s
                .tags
                .iter()
                .map(|t| model.tag_id(t).expect("tag set covers training tags"))
                .collect();
            (EncodedSentence { positions }, gold)
        })
        .collect();
    let loss_trace = fit(&mut model, &data, config)?;
    Ok(TrainOutcome { model, loss_trace })
}

/// Optimizes `model` in place on pre-encoded examples; returns the loss trace.
pub fn fit(model: &mut CrfModel, data: &[Example], config: &TrainConfig) -> Result<Vec<f64>, TaggerError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TaggerError::EmptyTrainingSet);
    }
    let n = data.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; model.weights().len()];
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let eta = config.learning_rate / (1.0 + config.decay * epoch as f64);
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let (x, y) = &data[i];
                accumulate_gradient(model, x, y, &mut grad);
            }
            let step = eta / batch.len() as f64;
            let shrink = 1.0 + 2.0 * eta * config.l2 / n;
            for (w, g) in model.weights_mut().iter_mut().zip(&grad) {
                *w = (*w + step * g) / shrink;
            }
        }
        if model.weights().iter().any(|w| !w.is_finite()) {
            return Err(TaggerError::Diverged { epoch });
        }
        trace.push(objective_loss(model, data, config.l2));
    }
    Ok(trace)
}

/// `−Σ log-likelihood + l2·‖w‖²` over `data`.
pub fn objective_loss(model: &CrfModel, data: &[Example], l2: f64) -> f64 {
    let nll: f64 = data.iter().map(|(x, y)| -log_likelihood(model, x, y)).sum();
    let norm: f64 = model.weights().iter().map(|w| w * w).sum();
    nll + l2 * norm
}

/// `log Pr(gold | sentence)`.
pub fn log_likelihood(model: &CrfModel, x: &EncodedSentence, gold: &[usize]) -> f64 {
    let pot = model.potentials(x);
    pot.path_score(gold) - pot.log_partition()
}

/// Adds the gradient of `log Pr(gold | sentence)` to `grad` (empirical minus
/// expected feature counts) and returns the log-likelihood.
pub fn accumulate_gradient(
    model: &CrfModel,
    x: &EncodedSentence,
    gold: &[usize],
    grad: &mut [f64],
) -> f64 {
    let t = model.num_tags();
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let pot = model.potentials(x);
    let marg = pot.marginals();
    let trans_off = model.transition_offset();
    let start_off = model.start_offset();
    let stop_off = model.stop_offset();

    for (i, feats) in x.positions.iter().enumerate() {
        let node = &marg.node[i * t..(i + 1) * t];
        for &f in feats {
            let row = &mut grad[f * t..(f + 1) * t];
            row[gold[i]] += 1.0;
            for (g, p) in row.iter_mut().zip(node) {
                *g -= p;
            }
        }
    }
    for i in 1..n {
        grad[trans_off + gold[i - 1] * t + gold[i]] += 1.0;
        let edge = &marg.edge[(i - 1) * t * t..i * t * t];
        for (g, p) in grad[trans_off..trans_off + t * t].iter_mut().zip(edge) {
            *g -= p;
        }
    }
    grad[start_off + gold[0]] += 1.0;
    grad[stop_off + gold[n - 1]] += 1.0;
    for y in 0..t {
        grad[start_off + y] -= marg.node[y];
        grad[stop_off + y] -= marg.node[(n - 1) * t + y];
    }
    pot.path_score(gold) - marg.log_partition
}
