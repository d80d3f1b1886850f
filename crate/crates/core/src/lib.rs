//! # spanlab
//!
//! Supervised span prediction under annotator disagreement.
//!
//! Documents are pre-tokenized word sequences paired with a label. Several
//! annotators mark word spans that support the label. This crate provides:
//!
//! * [`corpus`]: the JSONL corpus format, validation, and cross-validation folds.
//! * [`tags`]: conversion between span sets and the five-tag
//!   (Singleton/Begin/End/Inside/Outside) encoding.
//! * [`aggregate`]: strict word-level majority voting.
//! * [`evaluate`]: span- and word-level precision/recall/F1 against
//!   majority-voted or best-matched gold, plus the expert upper bound.
//! * [`tagger`]: a label-conditioned linear-chain CRF trained on aggregated
//!   (MV) or repeated (ReL) labels, and the random baseline.
//! * [`synth`]: synthetic corpora with simulated annotator noise.
//! * [`experiment`]: the cross-validated MV-vs-ReL study driver.

pub mod aggregate;
pub mod corpus;
pub mod evaluate;
pub mod experiment;
pub mod kv;
pub mod synth;
pub mod tagger;
pub mod tags;

pub use aggregate::{majority_vote, word_vote_counts, VoteProfile};
pub use corpus::{
    AnnotationRecord, Corpus, Document, FoldPlan, InputAnnotations, InputKey, Predictions, Span,
    SpanSet,
};
pub use evaluate::{EvalReport, GoldType, Level, MatchCounts, Scores};
pub use tagger::{CrfModel, Hyperparams, TrainingMode};
pub use tags::{Tag3, Tag5, TagSequence};
