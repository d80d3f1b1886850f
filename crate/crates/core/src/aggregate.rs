//! Strict word-level majority voting over annotators' span sets.

use thiserror::Error;

use crate::corpus::{AnnotationRecord, SpanError, SpanSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no annotation records to aggregate")]
    NoRecords,
    #[error(transparent)]
    Span(#[from] SpanError),
}

/// Per-word annotator coverage. `counts[i]` is for word `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteProfile {
    pub counts: Vec<usize>,
    pub total: usize,
}

impl VoteProfile {
    /// Words covered by strictly more than half of the annotators.
    pub fn majority_mask(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| 2 * c > self.total).collect()
    }
}

pub fn vote_counts<'a, I>(span_sets: I, n: usize) -> Result<VoteProfile, AggregateError>
where
    I: IntoIterator<Item = &'a SpanSet>,
{
    let mut counts = vec![0; n];
    let mut total = 0;
    for spans in span_sets {
        spans.check_bounds(n)?;
        for w in spans.words() {
            counts[w - 1] += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(AggregateError::NoRecords);
    }
    Ok(VoteProfile { counts, total })
}

pub fn word_vote_counts(
    records: &[AnnotationRecord],
    n: usize,
) -> Result<VoteProfile, AggregateError> {
    vote_counts(records.iter().map(|r| &r.spans), n)
}

/// Majority vote over arbitrary span sets. Maximal runs of words covered by
/// more than 50% of the sets become spans; exactly 50% is not enough.
pub fn majority_vote_sets<'a, I>(span_sets: I, n: usize) -> Result<SpanSet, AggregateError>
where
    I: IntoIterator<Item = &'a SpanSet>,
{
    let profile = vote_counts(span_sets, n)?;
    Ok(SpanSet::from_word_mask(&profile.majority_mask()))
}

pub fn majority_vote(records: &[AnnotationRecord], n: usize) -> Result<SpanSet, AggregateError> {
    majority_vote_sets(records.iter().map(|r| &r.spans), n)
}
