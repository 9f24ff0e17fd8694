//! Opinion target extraction as BIO sequence labelling.
//!
//! The crate covers the full pipeline: ABSA review XML is converted into
//! BIO-labelled token sequences, shallow and clustering features are
//! extracted over a 5-token window, an averaged perceptron is trained and
//! decoded with BIO-constrained Viterbi, and predictions are scored with
//! exact-span precision/recall/F1. Desk-scale inducers for Brown and
//! k-means clustering lexicons are included, together with a two-stage
//! cross-validated search over lexicon combinations.

pub mod brown;
pub mod cli;
pub mod corpus_io;
pub mod cvsearch;
pub mod evaluate;
pub mod features;
pub mod kmeans;
pub mod lexicon;
pub mod tagger;

mod xml;

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("xml parse error at line {line}: {msg}")]
    Xml { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("sentence {id}: overlapping target spans {a:?} and {b:?}")]
    SpanConflict {
        id: String,
        a: (usize, usize),
        b: (usize, usize),
    },

    #[error("{0}")]
    Invalid(String),

    #[error("unknown lexicon {0:?} referenced by feature config")]
    UnknownLexicon(String),

    #[error("model format version {found} unsupported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("sentence id mismatch: gold {gold:?} vs pred {pred:?}")]
    IdMismatch { gold: String, pred: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model decode failed: {0}")]
    ModelDecode(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
