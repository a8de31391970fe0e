//! Multi-label classification of research-data metadata by discipline of research.
//!
//! The pipeline runs in stages, each living in its own module:
//!
//! - [`ingest`]: OAI-PMH harvesting and DataCite XML parsing.
//! - [`scheme_map`]: mapping of subject tags from five classification schemes onto
//!   the 20 base disciplines.
//! - [`clean`]: annotatability filter, deduplication and payload construction.
//! - [`sample`]: dataset statistics, greedy "best label" assignment and stratified splits.
//! - [`vectorize`]: tf-idf bag of 1-/2-grams and per-label ANOVA feature selection.
//! - [`models`]: decision tree, random forest, extra trees and MLP classifiers.
//! - [`evaluate`]: f-beta scores (macro and micro) and report tables.

pub mod clean;
pub mod evaluate;
pub mod ingest;
pub mod models;
pub mod recordio;
pub mod sample;
pub mod scheme_map;
pub mod sparse;
pub mod vectorize;

pub use scheme_map::{Discipline, LabelSet, NUM_DISCIPLINES};
