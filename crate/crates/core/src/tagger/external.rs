//! JSON-lines prediction files, both written by this crate and produced by
//! outside taggers.
//!
//! One record per sentence: `{"id": .., "tags": [..], "confidence": ..}`.
//! `"raw_score": true` marks a confidence that is an unnormalized score (for
//! example averaged output logits); it is kept as-is and only its order is
//! used. A leading record carrying a `"schema"` key and no `"id"` is a
//! provenance header and is skipped.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{SentencePrediction, TaggerError};
use crate::corpus::BioTag;

pub const PREDICTIONS_SCHEMA: &str = "recheck/predictions/v1";

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    tags: Vec<String>,
    confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_partition: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    raw_score: bool,
}

/// A rejected record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Reads a prediction file, validating each record against `token_count`
/// (which returns the token count of a known sentence id).
///
/// All invalid records are reported together.
pub fn import_external_predictions<R, F>(
    reader: R,
    token_count: F,
) -> Result<Vec<SentencePrediction>, TaggerError>
where
    R: BufRead,
    F: Fn(&str) -> Option<usize>,
{
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| TaggerError::Records(vec![RecordError {
            line: lineno,
            message: e.to_string(),
        }]))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, &token_count) {
            Ok(Some(p)) => out.push(p),
            Ok(None) => {}
            Err(message) => errors.push(RecordError {
                line: lineno,
                message,
            }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(TaggerError::Records(errors))
    }
}

fn parse_record(
    line: &str,
    token_count: &impl Fn(&str) -> Option<usize>,
) -> Result<Option<SentencePrediction>, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if value.get("schema").is_some() && value.get("id").is_none() {
        return Ok(None);
    }
    let record: Record = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let expected = token_count(&record.id).ok_or_else(|| format!("unknown sentence id {}", record.id))?;
    if record.tags.len() != expected {
        return Err(format!(
            "sentence {} has {expected} tokens but {} tags",
            record.id,
            record.tags.len()
        ));
    }
    let tags = record
        .tags
        .iter()
        .map(|t| t.parse::<BioTag>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    if !record.confidence.is_finite() {
        return Err("confidence is not finite".into());
    }
    if !record.raw_score && !(record.confidence > 0.0 && record.confidence <= 1.0) {
        return Err(format!(
            "confidence {} outside (0, 1]; set raw_score for unnormalized scores",
            record.confidence
        ));
    }
    Ok(Some(SentencePrediction {
        id: record.id,
        tags,
        confidence: record.confidence,
        log_partition: record.log_partition,
        path_score: None,
        raw_score: record.raw_score,
    }))
}

/// Writes predictions after a header line.
pub fn write_predictions<W: Write>(
    mut w: W,
    predictions: &[SentencePrediction],
    header: &serde_json::Value,
) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    for p in predictions {
        let record = Record {
            id: p.id.clone(),
            tags: p.tags.iter().map(ToString::to_string).collect(),
            confidence: p.confidence,
            log_partition: p.log_partition,
            raw_score: p.raw_score,
        };
        serde_json::to_writer(&mut w, &record)?;
        writeln!(w)?;
    }
    Ok(())
}
