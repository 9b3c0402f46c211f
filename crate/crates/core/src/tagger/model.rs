use std::fs;
use std::path::Path;

use indexmap::IndexSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::extract_features;
use super::lattice::Potentials;
use super::{SentencePrediction, TaggerError};
use crate::corpus::BioTag;

const MODEL_FORMAT: &str = "recheck-crf";
const MODEL_VERSION: u32 = 1;

/// A sentence mapped to known feature ids, one list per position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncodedSentence {
    pub positions: Vec<Vec<usize>>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Linear-chain CRF over binary features.
///
/// All weights live in one flat vector laid out as
/// `[emission (features × tags) | transition (tags × tags) | start | stop]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    tags: Vec<BioTag>,
    features: IndexSet<String>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    tags: Vec<BioTag>,
    features: Vec<String>,
    emission: Vec<f64>,
    transition: Vec<f64>,
    start: Vec<f64>,
    stop: Vec<f64>,
}

impl CrfModel {
    /// A zero-weight model. The tag set must contain `O` and no duplicates.
    pub fn new(
        tags: Vec<BioTag>,
        features: impl IntoIterator<Item = String>,
    ) -> Result<Self, TaggerError> {
        if !tags.contains(&BioTag::Outside) {
            return Err(TaggerError::InvalidModel("tag set lacks \"O\"".into()));
        }
        let unique: IndexSet<&BioTag> = tags.iter().collect();
        if unique.len() != tags.len() {
            return Err(TaggerError::InvalidModel("duplicate tags".into()));
        }
        let features: IndexSet<String> = features.into_iter().collect();
        let t = tags.len();
        let weights = vec![0.0; features.len() * t + t * t + 2 * t];
        Ok(Self {
            tags,
            features,
            weights,
        })
    }

    pub fn tags(&self) -> &[BioTag] {
        &self.tags
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_id(&self, feature: &str) -> Option<usize> {
        self.features.get_index_of(feature)
    }

    pub fn tag_id(&self, tag: &BioTag) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn emission_index(&self, feature: usize, tag: usize) -> usize {
        feature * self.num_tags() + tag
    }

    pub(crate) fn transition_offset(&self) -> usize {
        self.features.len() * self.num_tags()
    }

    pub(crate) fn start_offset(&self) -> usize {
        self.transition_offset() + self.num_tags() * self.num_tags()
    }

    pub(crate) fn stop_offset(&self) -> usize {
        self.start_offset() + self.num_tags()
    }

    pub fn transition(&self) -> &[f64] {
        &self.weights[self.transition_offset()..self.start_offset()]
    }

    pub fn start(&self) -> &[f64] {
        &self.weights[self.start_offset()..self.stop_offset()]
    }

    pub fn stop(&self) -> &[f64] {
        &self.weights[self.stop_offset()..]
    }

    /// Weight of `(feature, tag)`; zero for unknown features or tags.
    pub fn emission_weight(&self, feature: &str, tag: &BioTag) -> f64 {
        match (self.feature_id(feature), self.tag_id(tag)) {
            (Some(f), Some(t)) => self.weights[self.emission_index(f, t)],
            _ => 0.0,
        }
    }

    pub fn transition_weight(&self, prev: &BioTag, next: &BioTag) -> f64 {
        match (self.tag_id(prev), self.tag_id(next)) {
            (Some(p), Some(n)) => self.transition()[p * self.num_tags() + n],
            _ => 0.0,
        }
    }

    pub fn set_transition_weight(&mut self, prev: &BioTag, next: &BioTag, value: f64) {
        if let (Some(p), Some(n)) = (self.tag_id(prev), self.tag_id(next)) {
            let off = self.transition_offset() + p * self.num_tags() + n;
            self.weights[off] = value;
        }
    }

    pub fn set_emission_weight(&mut self, feature: &str, tag: &BioTag, value: f64) {
        if let (Some(f), Some(t)) = (self.feature_id(feature), self.tag_id(tag)) {
            let i = self.emission_index(f, t);
            self.weights[i] = value;
        }
    }

    /// Maps tokens to known feature ids; unknown features are dropped.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> EncodedSentence {
        EncodedSentence {
            positions: (0..tokens.len())
                .map(|i| {
                    extract_features(tokens, i)
                        .iter()
                        .filter_map(|f| self.feature_id(f))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn potentials(&self, sentence: &EncodedSentence) -> Potentials<'_> {
        let t = self.num_tags();
        let mut emission = vec![0.0; sentence.len() * t];
        for (i, feats) in sentence.positions.iter().enumerate() {
            let row = &mut emission[i * t..(i + 1) * t];
            for &f in feats {
                let w = &self.weights[f * t..(f + 1) * t];
                for (e, w) in row.iter_mut().zip(w) {
                    *e += w;
                }
            }
        }
        Potentials {
            emission,
            transition: self.transition(),
            start: self.start(),
            stop: self.stop(),
            num_tags: t,
        }
    }

    /// Viterbi labels plus the probability of that labeling under the model.
    pub fn decode<S: AsRef<str>>(&self, id: &str, tokens: &[S]) -> SentencePrediction {
        let encoded = self.encode(tokens);
        let pot = self.potentials(&encoded);
        let (path, score) = pot.viterbi();
        let log_z = pot.log_partition();
        SentencePrediction {
            id: id.to_string(),
            tags: path.iter().map(|&y| self.tags[y].clone()).collect(),
            confidence: (score - log_z).exp(),
            log_partition: Some(log_z),
            path_score: Some(score),
            raw_score: false,
        }
    }

    /// Decodes many sentences in parallel; output order follows input order.
    pub fn decode_all<'a, I, S>(&self, sentences: I) -> Vec<SentencePrediction>
    where
        I: IntoIterator<Item = (&'a str, &'a [S])>,
        S: AsRef<str> + Sync + 'a,
    {
        let items: Vec<(&str, &[S])> = sentences.into_iter().collect();
        items
            .par_iter()
            .map(|(id, tokens)| self.decode(id, tokens))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let t = self.num_tags();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            tags: self.tags.clone(),
            features: self.features.iter().cloned().collect(),
            emission: self.weights[..self.transition_offset()].to_vec(),
            transition: self.transition().to_vec(),
            start: self.start().to_vec(),
            stop: self.stop().to_vec(),
        };
        debug_assert_eq!(file.start.len(), t);
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TaggerError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| TaggerError::InvalidModel(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(TaggerError::InvalidModel(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        let mut model = CrfModel::new(file.tags, file.features)?;
        let t = model.num_tags();
        if file.emission.len() != model.num_features() * t
            || file.transition.len() != t * t
            || file.start.len() != t
            || file.stop.len() != t
        {
            return Err(TaggerError::InvalidModel("weight dimensions disagree".into()));
        }
        model.weights = [file.emission, file.transition, file.start, file.stop].concat();
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(TaggerError::InvalidModel("non-finite weight".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TaggerError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| TaggerError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaggerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| TaggerError::io(path, e))?;
        Self::from_json(&text)
    }
}
