//! Auditing single-annotator NER data and targeting a second annotation pass.
//!
//! The crate trains a linear-chain CRF tagger, ranks single-annotated
//! sentences for re-annotation (randomly, by sequence confidence, or by
//! similarity to held-out errors), scores those rankings against adjudicated
//! labels, and simulates retraining after the top-ranked sentences are fixed.

pub mod corpus;
pub mod evaluation;
pub mod experiment;
pub mod ranking;
pub mod similarity;
pub mod tagger;
