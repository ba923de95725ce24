//! Corpus engineering and evaluation for passive pharmacovigilance reports.
//!
//! The pipeline ingests VAERS-format CSV exports, derives the three regulatory
//! outcomes (ER attendance, hospitalisation, death) and their powerset class,
//! splits the corpus on sex and age quintile, trains a WordPiece vocabulary,
//! fits a bag-of-tokens softmax classifier with Adam, and scores predictions
//! class-wise, per event and by set combination.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod labels;
pub mod model;
pub mod rng;
pub mod selection;
pub mod splitter;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
pub use labels::{ClassId, EventKind, OutcomeSet, NUM_CLASSES};

/// Version of the JSONL record schema and vocabulary/checkpoint formats.
pub const DATA_SCHEMA_VERSION: u32 = 1;
