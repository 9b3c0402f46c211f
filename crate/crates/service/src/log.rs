//! Append-only adjudication log and the annotations it implies.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use recheck_core::corpus::{first_bio2_violation, BioTag, CorpusError, ParallelCorpus, TagMap};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const LOG_SCHEMA: &str = "recheck/adjudication-log/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Adjudicate,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub schema: String,
    pub action: Action,
    pub id: String,
    /// Submitted labels; empty for skips.
    #[serde(default)]
    pub tags: Vec<BioTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Adjudicated,
    Skipped,
}

/// Why a submission was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    UnknownId,
    Invalid(String),
    Conflict(String),
}

/// What applying an entry did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    Appended,
    Unchanged,
}

/// In-memory view of the log, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct AdjudicationLog {
    entries: Vec<LogEntry>,
    adjudicated: BTreeMap<String, Vec<BioTag>>,
    skipped: BTreeMap<String, u64>,
    file: Option<File>,
}

impl AdjudicationLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays the file at `path` (if present) against `corpus` and keeps
    /// appending to it.
    pub fn open(path: &Path, corpus: &ParallelCorpus) -> Result<Self, ServiceError> {
        let io = |e: std::io::Error| ServiceError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut log = if path.exists() {
            Self::replay(BufReader::new(File::open(path).map_err(io)?), corpus)?
        } else {
            Self::new()
        };
        log.file = Some(OpenOptions::new().create(true).append(true).open(path).map_err(io)?);
        Ok(log)
    }

    /// Rebuilds the state from log lines. Every line must apply cleanly.
    pub fn replay<R: BufRead>(reader: R, corpus: &ParallelCorpus) -> Result<Self, ServiceError> {
        let mut log = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let bad = |message: String| ServiceError::Log { line: i + 1, message };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if entry.schema != LOG_SCHEMA {
                return Err(bad(format!("unsupported schema {}", entry.schema)));
            }
            log.apply(entry, corpus).map_err(|r| bad(format!("{r:?}")))?;
        }
        Ok(log)
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn status(&self, id: &str) -> Status {
        if self.adjudicated.contains_key(id) {
            Status::Adjudicated
        } else if self.skipped.contains_key(id) {
            Status::Skipped
        } else {
            Status::Pending
        }
    }

    pub fn adjudicated(&self) -> &BTreeMap<String, Vec<BioTag>> {
        &self.adjudicated
    }

    pub fn adjudicated_tags(&self, id: &str) -> Option<&[BioTag]> {
        self.adjudicated.get(id).map(Vec::as_slice)
    }

    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }

    /// Builds and applies an entry stamped with the current time.
    pub fn submit(
        &mut self,
        action: Action,
        id: &str,
        tags: Vec<BioTag>,
        annotator: Option<String>,
        corpus: &ParallelCorpus,
    ) -> Result<Applied, Rejection> {
        let entry = LogEntry {
            schema: LOG_SCHEMA.into(),
            action,
            id: id.to_string(),
            tags,
            annotator,
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        self.apply(entry, corpus)
    }

    /// Validates an entry and records it. Resubmitting what is already in
    /// effect changes nothing; anything else after a decision is a conflict.
    pub fn apply(&mut self, entry: LogEntry, corpus: &ParallelCorpus) -> Result<Applied, Rejection> {
        let sentence = corpus.sentence(&entry.id).ok_or(Rejection::UnknownId)?;
        match entry.action {
            Action::Adjudicate => {
                if entry.tags.len() != sentence.len() {
                    return Err(Rejection::Invalid(format!(
                        "sentence {} has {} tokens but {} tags were submitted",
                        entry.id,
                        sentence.len(),
                        entry.tags.len()
                    )));
                }
                if let Some(i) = first_bio2_violation(&entry.tags) {
                    return Err(Rejection::Invalid(format!(
                        "tag {} at position {i} does not continue a mention of the same type",
                        entry.tags[i]
                    )));
                }
                if let Some(existing) = self.adjudicated.get(&entry.id) {
                    return if *existing == entry.tags {
                        Ok(Applied::Unchanged)
                    } else {
                        Err(Rejection::Conflict(format!(
                            "sentence {} was already adjudicated with different tags",
                            entry.id
                        )))
                    };
                }
                if self.skipped.contains_key(&entry.id) {
                    return Err(Rejection::Conflict(format!("sentence {} was skipped", entry.id)));
                }
                self.adjudicated.insert(entry.id.clone(), entry.tags.clone());
            }
            Action::Skip => {
                if self.skipped.contains_key(&entry.id) {
                    return Ok(Applied::Unchanged);
                }
                if self.adjudicated.contains_key(&entry.id) {
                    return Err(Rejection::Conflict(format!(
                        "sentence {} was already adjudicated",
                        entry.id
                    )));
                }
                self.skipped.insert(entry.id.clone(), entry.timestamp_ms);
            }
        }
        if let Some(f) = self.file.as_mut() {
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            // A failed write leaves memory and file out of step; surface it.
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| Rejection::Invalid(format!("log write failed: {e}")))?;
        }
        self.entries.push(entry);
        Ok(Applied::Appended)
    }

    /// The corpus with adjudicated submissions replacing pre-adjudicated labels.
    pub fn effective_corpus(&self, corpus: &ParallelCorpus) -> Result<ParallelCorpus, CorpusError> {
        corpus.with_pre_overrides(self.adjudicated.iter().map(|(id, t)| (id.as_str(), t.as_slice())))
    }
}

/// Pre-adjudicated labels of every sentence after replaying `entries`.
pub fn effective_annotations(corpus: &ParallelCorpus, entries: &[LogEntry]) -> Result<TagMap, ServiceError> {
    let mut log = AdjudicationLog::new();
    for (i, e) in entries.iter().enumerate() {
        log.apply(e.clone(), corpus).map_err(|r| ServiceError::Log {
            line: i + 1,
            message: format!("{r:?}"),
        })?;
    }
    let effective = log.effective_corpus(corpus)?;
    Ok(effective
        .sentences()
        .iter()
        .filter_map(|s| effective.pre_adjudicated(&s.id).map(|t| (s.id.clone(), t.to_vec())))
        .collect())
}
