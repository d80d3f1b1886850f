//! Multi-annotator span corpora: types, JSONL I/O, validation, folds, and
//! CoNLL export.
//!
//! Every input is a (document, label) pair with one span set per annotator.
//! Word indices are 1-based and inclusive, in memory and on disk.

mod folds;
mod io;
mod span;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use folds::{split_folds, Fold, FoldPlan};
pub use io::{
    export_conll, parse_corpus, read_predictions, read_raw, write_corpus, write_predictions,
    PredictionRecord,
};
pub use span::{Span, SpanError, SpanSet};
pub use validate::{validate, validate_raw, Policy, Violation, ViolationKind, MIN_ANNOTATOR_SPAN};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: Violation },
    #[error("line {line}: {message}")]
    Prediction { line: usize, message: String },
    #[error("tag sequence length {got} does not match document {doc_id} with N={n}")]
    LengthMismatch { doc_id: String, n: usize, got: usize },
    #[error("fold split: {0}")]
    Folds(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub words: Vec<String>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub spans: SpanSet,
}

/// Identifies an input by its (doc_id, label) pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputKey {
    pub doc_id: String,
    pub label: String,
}

impl InputKey {
    pub fn new(doc_id: impl Into<String>, label: impl Into<String>) -> Self {
        InputKey {
            doc_id: doc_id.into(),
            label: label.into(),
        }
    }
}

impl fmt::Display for InputKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.doc_id, self.label)
    }
}

/// Predicted (or truth) span sets keyed by input.
pub type Predictions = BTreeMap<InputKey, SpanSet>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputAnnotations {
    pub document: Arc<Document>,
    pub label: String,
    pub records: Vec<AnnotationRecord>,
}

impl InputAnnotations {
    pub fn key(&self) -> InputKey {
        InputKey::new(self.document.doc_id.clone(), self.label.clone())
    }

    pub fn n(&self) -> usize {
        self.document.len()
    }

    pub fn words(&self) -> &[String] {
        &self.document.words
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    inputs: Vec<InputAnnotations>,
}

impl Corpus {
    /// Builds a corpus, checking the structural invariants (bounds, overlap,
    /// uniqueness, non-empty records). Short spans are not rejected here.
    pub fn new(inputs: Vec<InputAnnotations>) -> Result<Self, CorpusError> {
        let corpus = Corpus { inputs };
        let raw = corpus.to_raw();
        if let Some(violation) = validate_raw(&raw, Policy::Lenient).into_iter().next() {
            let line = raw
                .iter()
                .position(|r| r.doc_id == violation.doc_id && r.label == violation.label)
                .map_or(0, |i| i + 1);
            return Err(CorpusError::Invalid { line, violation });
        }
        Ok(corpus)
    }

    pub(crate) fn from_valid(inputs: Vec<InputAnnotations>) -> Self {
        Corpus { inputs }
    }

    pub fn inputs(&self) -> &[InputAnnotations] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InputAnnotations> {
        self.inputs.iter()
    }

    /// Distinct doc_ids in first-appearance order.
    pub fn doc_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.inputs
            .iter()
            .map(|i| i.document.doc_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    /// Inputs whose doc_id passes `keep`, in corpus order.
    pub fn filter_docs<F: Fn(&str) -> bool>(&self, keep: F) -> Corpus {
        Corpus {
            inputs: self
                .inputs
                .iter()
                .filter(|i| keep(&i.document.doc_id))
                .cloned()
                .collect(),
        }
    }

    pub fn total_records(&self) -> usize {
        self.inputs.iter().map(|i| i.records.len()).sum()
    }

    pub fn to_raw(&self) -> Vec<RawInput> {
        self.inputs
            .iter()
            .map(|input| RawInput {
                doc_id: input.document.doc_id.clone(),
                words: input.document.words.clone(),
                label: input.label.clone(),
                annotations: input
                    .records
                    .iter()
                    .map(|r| RawAnnotation {
                        annotator_id: r.annotator_id.clone(),
                        spans: r.spans.to_pairs(),
                    })
                    .collect(),
            })
            .collect()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a InputAnnotations;
    type IntoIter = std::slice::Iter<'a, InputAnnotations>;

    fn into_iter(self) -> Self::IntoIter {
        self.inputs.iter()
    }
}

/// One corpus JSONL line, before any invariant checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInput {
    pub doc_id: String,
    pub words: Vec<String>,
    pub label: String,
    pub annotations: Vec<RawAnnotation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub annotator_id: String,
    pub spans: Vec<(usize, usize)>,
}
