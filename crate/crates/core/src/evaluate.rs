//! Span- and word-level scoring against majority-voted or best-matched gold.
//!
//! Scores are micro-averaged: match counts are summed over inputs before
//! precision, recall and F1 are computed, as in the CoNLL-2000 chunking
//! script (word level corresponds to its `-r` mode).

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{majority_vote, AggregateError};
use crate::corpus::{AnnotationRecord, Corpus, InputAnnotations, InputKey, Predictions, SpanSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// Exact (begin, end) matches.
    Span,
    /// Shared covered words.
    Word,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldType {
    Majority,
    BestMatched,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::Span, Level::Word];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Span => "span",
            Level::Word => "word",
        }
    }
}

impl GoldType {
    pub const ALL: [GoldType; 2] = [GoldType::Majority, GoldType::BestMatched];

    pub fn as_str(self) -> &'static str {
        match self {
            GoldType::Majority => "majority",
            GoldType::BestMatched => "best-matched",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for GoldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "span" => Ok(Level::Span),
            "word" => Ok(Level::Word),
            _ => Err(format!("unknown level {s:?} (expected span or word)")),
        }
    }
}

impl FromStr for GoldType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "majority" => Ok(GoldType::Majority),
            "best-matched" => Ok(GoldType::BestMatched),
            _ => Err(format!(
                "unknown gold type {s:?} (expected majority or best-matched)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl MatchCounts {
    pub fn new(matched: usize, predicted: usize, gold: usize) -> Self {
        MatchCounts {
            matched,
            predicted,
            gold,
        }
    }

    pub fn scores(&self) -> Scores {
        prf(*self)
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            matched: self.matched + o.matched,
            predicted: self.predicted + o.predicted,
            gold: self.gold + o.gold,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

impl Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), Add::add)
    }
}

/// Precision, recall and F1 as fractions in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Empty prediction against empty gold scores 1.0 everywhere; otherwise a
/// zero denominator gives 0.
pub fn prf(c: MatchCounts) -> Scores {
    if c.predicted == 0 && c.gold == 0 {
        return Scores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.matched, c.predicted);
    let recall = ratio(c.matched, c.gold);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f1,
    }
}

pub fn match_counts(pred: &SpanSet, gold: &SpanSet, level: Level) -> MatchCounts {
    match level {
        Level::Span => {
            // both sides sorted: merge-walk
            let (p, g) = (pred.spans(), gold.spans());
            let (mut i, mut j, mut matched) = (0, 0, 0);
            while i < p.len() && j < g.len() {
                match p[i].cmp(&g[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        matched += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
            MatchCounts::new(matched, p.len(), g.len())
        }
        Level::Word => {
            let (p, g) = (pred.spans(), gold.spans());
            let (mut i, mut j, mut matched) = (0, 0, 0);
            while i < p.len() && j < g.len() {
                let lo = p[i].begin.max(g[j].begin);
                let hi = p[i].end.min(g[j].end);
                if lo <= hi {
                    matched += hi - lo + 1;
                }
                if p[i].end < g[j].end {
                    i += 1;
                } else {
                    j += 1;
                }
            }
            MatchCounts::new(matched, pred.word_count(), gold.word_count())
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction for input {0}")]
    MissingPrediction(InputKey),
    #[error("prediction for {key}: {message}")]
    BadPrediction { key: InputKey, message: String },
    #[error("input {key}: {source}")]
    Aggregate {
        key: InputKey,
        #[source]
        source: AggregateError,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScore {
    pub doc_id: String,
    pub label: String,
    /// The chosen annotator, for best-matched gold and expert estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    pub counts: MatchCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    pub gold_type: GoldType,
    pub counts: MatchCounts,
    pub scores: Scores,
    pub per_input: Vec<InputScore>,
}

impl EvalReport {
    fn from_inputs(level: Level, gold_type: GoldType, per_input: Vec<InputScore>) -> Self {
        let counts: MatchCounts = per_input.iter().map(|s| s.counts).sum();
        EvalReport {
            level,
            gold_type,
            counts,
            scores: prf(counts),
            per_input,
        }
    }

    /// `{level, gold_type, precision, recall, f1, matched, predicted, gold}`
    /// with scores as fractions.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "level": self.level,
            "gold_type": self.gold_type,
            "precision": self.scores.precision,
            "recall": self.scores.recall,
            "f1": self.scores.f1,
            "matched": self.counts.matched,
            "predicted": self.counts.predicted,
            "gold": self.counts.gold,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "level={} gold={}", self.level, self.gold_type)?;
        writeln!(
            f,
            "{:>8} {:>8} {:>8} {:>9} {:>9} {:>9}",
            "P", "R", "F1", "matched", "predicted", "gold"
        )?;
        write!(
            f,
            "{:>8.1} {:>8.1} {:>8.1} {:>9} {:>9} {:>9}",
            100.0 * self.scores.precision,
            100.0 * self.scores.recall,
            100.0 * self.scores.f1,
            self.counts.matched,
            self.counts.predicted,
            self.counts.gold
        )
    }
}

fn prediction_for<'a>(
    predictions: &'a Predictions,
    input: &InputAnnotations,
) -> Result<&'a SpanSet, EvalError> {
    let key = input.key();
    let pred = predictions
        .get(&key)
        .ok_or_else(|| EvalError::MissingPrediction(key.clone()))?;
    pred.check_bounds(input.n())
        .map_err(|e| EvalError::BadPrediction {
            key,
            message: e.to_string(),
        })?;
    Ok(pred)
}

fn majority_gold(input: &InputAnnotations) -> Result<SpanSet, EvalError> {
    majority_vote(&input.records, input.n()).map_err(|source| EvalError::Aggregate {
        key: input.key(),
        source,
    })
}

/// Scores predictions against each input's majority-voted spans.
pub fn evaluate_corpus(
    predictions: &Predictions,
    corpus: &Corpus,
    level: Level,
) -> Result<EvalReport, EvalError> {
    let per_input = corpus
        .iter()
        .map(|input| {
            let pred = prediction_for(predictions, input)?;
            let gold = majority_gold(input)?;
            Ok(InputScore {
                doc_id: input.document.doc_id.clone(),
                label: input.label.clone(),
                annotator_id: None,
                counts: match_counts(pred, &gold, level),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport::from_inputs(level, GoldType::Majority, per_input))
}

/// Picks the single annotator whose spans give `pred` the highest F1.
/// Ties go to the lexicographically smallest annotator_id.
///
/// Panics if `records` is empty.
pub fn best_match_select<'a>(
    pred: &SpanSet,
    records: &'a [AnnotationRecord],
    level: Level,
) -> (&'a str, MatchCounts) {
    let mut best: Option<(&str, MatchCounts, f64)> = None;
    for r in records {
        let counts = match_counts(pred, &r.spans, level);
        let f1 = prf(counts).f1;
        let better = match best {
            None => true,
            Some((id, _, best_f1)) => {
                f1 > best_f1 || (f1 == best_f1 && r.annotator_id.as_str() < id)
            }
        };
        if better {
            best = Some((&r.annotator_id, counts, f1));
        }
    }
    let (id, counts, _) = best.expect("best_match_select needs at least one record");
    (id, counts)
}

pub fn evaluate_best_matched(
    predictions: &Predictions,
    corpus: &Corpus,
    level: Level,
) -> Result<EvalReport, EvalError> {
    let per_input = corpus
        .iter()
        .map(|input| {
            let pred = prediction_for(predictions, input)?;
            let (id, counts) = best_match_select(pred, &input.records, level);
            Ok(InputScore {
                doc_id: input.document.doc_id.clone(),
                label: input.label.clone(),
                annotator_id: Some(id.to_owned()),
                counts,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport::from_inputs(level, GoldType::BestMatched, per_input))
}

pub fn evaluate(
    predictions: &Predictions,
    corpus: &Corpus,
    level: Level,
    gold: GoldType,
) -> Result<EvalReport, EvalError> {
    match gold {
        GoldType::Majority => evaluate_corpus(predictions, corpus, level),
        GoldType::BestMatched => evaluate_best_matched(predictions, corpus, level),
    }
}

/// Scores the best annotator of every input against its majority-voted
/// spans: a realistic upper bound for models evaluated the same way.
pub fn expert_estimate(corpus: &Corpus, level: Level) -> Result<EvalReport, EvalError> {
    let per_input = corpus
        .iter()
        .map(|input| {
            let gold = majority_gold(input)?;
            let mut best: Option<(&str, MatchCounts, f64)> = None;
            for r in &input.records {
                let counts = match_counts(&r.spans, &gold, level);
                let f1 = prf(counts).f1;
                let better = match best {
                    None => true,
                    Some((id, _, best_f1)) => {
                        f1 > best_f1 || (f1 == best_f1 && r.annotator_id.as_str() < id)
                    }
                };
                if better {
                    best = Some((&r.annotator_id, counts, f1));
                }
            }
            let (id, counts, _) = best.ok_or_else(|| EvalError::Aggregate {
                key: input.key(),
                source: AggregateError::NoRecords,
            })?;
            Ok(InputScore {
                doc_id: input.document.doc_id.clone(),
                label: input.label.clone(),
                annotator_id: Some(id.to_owned()),
                counts,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport::from_inputs(level, GoldType::Majority, per_input))
}
