use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A contiguous run of words, 1-based and inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("invalid span begin {0} (indices are 1-based)")]
    BeginOutOfRange(usize),
    #[error("span begin {begin} is after end {end}")]
    Reversed { begin: usize, end: usize },
    #[error("span end {end} exceeds N={n}")]
    EndExceeds { end: usize, n: usize },
    #[error("overlapping spans {0} and {1}")]
    Overlap(Span, Span),
}

impl Span {
    pub fn new(begin: usize, end: usize) -> Result<Self, SpanError> {
        if begin == 0 {
            return Err(SpanError::BeginOutOfRange(begin));
        }
        if begin > end {
            return Err(SpanError::Reversed { begin, end });
        }
        Ok(Span { begin, end })
    }

    /// Number of words covered.
    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, word: usize) -> bool {
        self.begin <= word && word <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.begin <= other.end && other.begin <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.begin, self.end)
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.begin, s.end)
    }
}

/// Sorted, pairwise non-overlapping spans. May be empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SpanSet(Vec<Span>);

impl SpanSet {
    pub fn empty() -> Self {
        SpanSet(Vec::new())
    }

    /// Builds a span set from spans in any order; fails if two spans overlap.
    pub fn new(mut spans: Vec<Span>) -> Result<Self, SpanError> {
        spans.sort_unstable();
        for pair in spans.windows(2) {
            if pair[0].end >= pair[1].begin {
                return Err(SpanError::Overlap(pair[0], pair[1]));
            }
        }
        Ok(SpanSet(spans))
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self, SpanError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let spans = pairs
            .into_iter()
            .map(|(b, e)| Span::new(b, e))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(spans)
    }

    /// Caller guarantees the spans are valid, sorted, and disjoint.
    pub(crate) fn from_sorted(spans: Vec<Span>) -> Self {
        debug_assert!(spans.windows(2).all(|p| p[0].end < p[1].begin));
        SpanSet(spans)
    }

    /// Maximal runs of `true` in a 0-based mask, as 1-based spans.
    pub fn from_word_mask(mask: &[bool]) -> Self {
        let mut spans = Vec::new();
        let mut open: Option<usize> = None;
        for (i, &inside) in mask.iter().enumerate() {
            match (inside, open) {
                (true, None) => open = Some(i + 1),
                (false, Some(b)) => {
                    spans.push(Span { begin: b, end: i });
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(b) = open {
            spans.push(Span {
                begin: b,
                end: mask.len(),
            });
        }
        SpanSet(spans)
    }

    pub fn check_bounds(&self, n: usize) -> Result<(), SpanError> {
        match self.0.last() {
            Some(last) if last.end > n => Err(SpanError::EndExceeds { end: last.end, n }),
            _ => Ok(()),
        }
    }

    pub fn spans(&self) -> &[Span] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Span> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of covered words.
    pub fn word_count(&self) -> usize {
        self.0.iter().map(Span::len).sum()
    }

    /// Covered word indices in increasing order.
    pub fn words(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().flat_map(|s| s.begin..=s.end)
    }

    pub fn contains_word(&self, word: usize) -> bool {
        self.0
            .binary_search_by(|s| {
                if s.end < word {
                    std::cmp::Ordering::Less
                } else if s.begin > word {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .is_ok()
    }

    pub fn to_pairs(&self) -> Vec<(usize, usize)> {
        self.0.iter().map(|s| (s.begin, s.end)).collect()
    }
}

impl<'a> IntoIterator for &'a SpanSet {
    type Item = &'a Span;
    type IntoIter = std::slice::Iter<'a, Span>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl Serialize for SpanSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_pairs().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpanSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(usize, usize)>::deserialize(deserializer)?;
        SpanSet::from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_and_rejects_overlap() {
        let s = SpanSet::from_pairs([(9, 12), (3, 5)]).unwrap();
        assert_eq!(s.to_pairs(), vec![(3, 5), (9, 12)]);
        assert!(matches!(
            SpanSet::from_pairs([(1, 4), (3, 6)]),
            Err(SpanError::Overlap(..))
        ));
        // adjacent but disjoint is fine
        assert!(SpanSet::from_pairs([(1, 2), (3, 4)]).is_ok());
    }

    #[test]
    fn bad_spans() {
        assert_eq!(Span::new(0, 2), Err(SpanError::BeginOutOfRange(0)));
        assert_eq!(Span::new(3, 2), Err(SpanError::Reversed { begin: 3, end: 2 }));
        let s = SpanSet::from_pairs([(2, 4)]).unwrap();
        assert_eq!(
            s.check_bounds(3).unwrap_err().to_string(),
            "span end 4 exceeds N=3"
        );
    }

    #[test]
    fn mask_runs() {
        let s = SpanSet::from_word_mask(&[false, true, true, false, true]);
        assert_eq!(s.to_pairs(), vec![(2, 3), (5, 5)]);
        assert!(s.contains_word(5));
        assert!(!s.contains_word(4));
        assert_eq!(s.words().collect::<Vec<_>>(), vec![2, 3, 5]);
    }
}
