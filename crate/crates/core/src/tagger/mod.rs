//! Linear-chain CRF tagger with sequence-probability confidence.
//!
//! A sentence `S` with labeling `Y` scores `s(Y, S)`, the sum of emission and
//! transition weights along the path. The confidence of a prediction is the
//! probability of the Viterbi labeling under the softmax over all labelings:
//!
//! ```text
//! Pr(Y | S) = exp(s(Y, S)) / Σ_{Y'} exp(s(Y', S))
//! ```
//!
//! computed in log space with the forward algorithm. Predictions from other
//! taggers enter through [`import_external_predictions`].

mod external;
pub mod features;
pub mod lattice;
mod model;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{BioTag, TagMap};

pub use external::{import_external_predictions, write_predictions, RecordError, PREDICTIONS_SCHEMA};
pub use features::extract_features;
pub use model::{CrfModel, EncodedSentence};
pub use train::{
    accumulate_gradient, fit, log_likelihood, objective_loss, train, Example, TrainConfig,
    TrainOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum TaggerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("sentence {id}: expected {expected} tags, found {found}")]
    LengthMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid prediction records: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Records(Vec<RecordError>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TaggerError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TaggerError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One decoded sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub id: String,
    pub tags: Vec<BioTag>,
    /// Probability of `tags` under the model, or an unnormalized score when
    /// `raw_score` is set.
    pub confidence: f64,
    /// Log partition function; absent for imported predictions.
    pub log_partition: Option<f64>,
    /// Score of the decoded path; absent for imported predictions.
    pub path_score: Option<f64>,
    pub raw_score: bool,
}

impl SentencePrediction {
    /// Confidence used for ranking. With `length_normalize`, probabilities are
    /// replaced by their per-token geometric mean; raw scores are returned
    /// unchanged either way.
    pub fn ranking_key(&self, length_normalize: bool) -> f64 {
        if self.raw_score || !length_normalize || self.tags.is_empty() {
            self.confidence
        } else {
            self.confidence.ln() / self.tags.len() as f64
        }
    }
}

/// Collects predictions into an id → labels map.
pub fn predictions_to_tag_map(predictions: &[SentencePrediction]) -> TagMap {
    predictions
        .iter()
        .map(|p| (p.id.clone(), p.tags.clone()))
        .collect()
}
