//! Span sets as per-word tag sequences.
//!
//! The five-tag scheme marks each word as the Singleton, Begin, End, or
//! Inside word of a span, or Outside of all spans. The three-tag scheme
//! (Start / Continue / Outside) is only used by the random baseline.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{Span, SpanError, SpanSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag5 {
    Singleton = 0,
    Begin = 1,
    End = 2,
    Inside = 3,
    Outside = 4,
}

impl Tag5 {
    pub const COUNT: usize = 5;
    /// Index order used by the CRF and by Viterbi tie-breaking.
    pub const ALL: [Tag5; 5] = [
        Tag5::Singleton,
        Tag5::Begin,
        Tag5::End,
        Tag5::Inside,
        Tag5::Outside,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag5> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag5::Singleton => "S",
            Tag5::Begin => "B",
            Tag5::End => "E",
            Tag5::Inside => "I",
            Tag5::Outside => "O",
        }
    }

    /// CoNLL chunk rendering.
    pub fn conll_chunk(self) -> &'static str {
        match self {
            Tag5::Singleton => "S-SPAN",
            Tag5::Begin => "B-SPAN",
            Tag5::End => "E-SPAN",
            Tag5::Inside => "I-SPAN",
            Tag5::Outside => "O",
        }
    }

    /// Whether a span is still open after this tag.
    fn leaves_open(self) -> bool {
        matches!(self, Tag5::Begin | Tag5::Inside)
    }
}

impl fmt::Display for Tag5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown tag {0:?}")]
pub struct UnknownTag(pub String);

impl FromStr for Tag5 {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag5::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTag(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag3 {
    Start,
    Continue,
    Outside,
}

impl Tag3 {
    pub const ALL: [Tag3; 3] = [Tag3::Start, Tag3::Continue, Tag3::Outside];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag3::Start => "ST",
            Tag3::Continue => "CO",
            Tag3::Outside => "O",
        }
    }
}

impl fmt::Display for Tag3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag3 {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag3::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTag(s.to_owned()))
    }
}

/// Per-word five-tag sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct TagSequence(Vec<Tag5>);

impl TagSequence {
    pub fn new(tags: Vec<Tag5>) -> Self {
        TagSequence(tags)
    }

    pub fn into_inner(self) -> Vec<Tag5> {
        self.0
    }
}

impl Deref for TagSequence {
    type Target = [Tag5];

    fn deref(&self) -> &[Tag5] {
        &self.0
    }
}

impl From<Vec<Tag5>> for TagSequence {
    fn from(v: Vec<Tag5>) -> Self {
        TagSequence(v)
    }
}

impl fmt::Display for TagSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

pub fn encode_spans(spans: &SpanSet, n: usize) -> Result<TagSequence, SpanError> {
    spans.check_bounds(n)?;
    let mut tags = vec![Tag5::Outside; n];
    for s in spans {
        if s.begin == s.end {
            tags[s.begin - 1] = Tag5::Singleton;
            continue;
        }
        tags[s.begin - 1] = Tag5::Begin;
        for t in &mut tags[s.begin..s.end - 1] {
            *t = Tag5::Inside;
        }
        tags[s.end - 1] = Tag5::End;
    }
    Ok(TagSequence(tags))
}

/// Decodes any tag sequence into spans.
///
/// Invalid sequences are repaired left to right: Inside/End with no open
/// span act as Begin/Singleton, and an open span is closed at the previous
/// word when Outside, Begin, or Singleton follows it (or the sequence ends).
/// Every non-Outside word ends up inside some span.
pub fn decode_tags(tags: &[Tag5]) -> SpanSet {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &tag) in tags.iter().enumerate() {
        let pos = i + 1;
        match tag {
            Tag5::Singleton | Tag5::Begin | Tag5::Outside => {
                if let Some(b) = open.take() {
                    spans.push(Span { begin: b, end: pos - 1 });
                }
                match tag {
                    Tag5::Singleton => spans.push(Span { begin: pos, end: pos }),
                    Tag5::Begin => open = Some(pos),
                    _ => {}
                }
            }
            Tag5::Inside => {
                open.get_or_insert(pos);
            }
            Tag5::End => {
                let b = open.take().unwrap_or(pos);
                spans.push(Span { begin: b, end: pos });
            }
        }
    }
    if let Some(b) = open {
        spans.push(Span {
            begin: b,
            end: tags.len(),
        });
    }
    SpanSet::from_sorted(spans)
}

/// Decodes baseline tags. A Start always opens a new span; a Continue
/// extends the open span or opens one if none is open. A word is inside a
/// span exactly when its tag is not Outside.
pub fn decode_start_continue(tags: &[Tag3]) -> SpanSet {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &tag) in tags.iter().enumerate() {
        let pos = i + 1;
        match tag {
            Tag3::Start => {
                if let Some(b) = open.replace(pos) {
                    spans.push(Span { begin: b, end: pos - 1 });
                }
            }
            Tag3::Continue => {
                open.get_or_insert(pos);
            }
            Tag3::Outside => {
                if let Some(b) = open.take() {
                    spans.push(Span { begin: b, end: pos - 1 });
                }
            }
        }
    }
    if let Some(b) = open {
        spans.push(Span {
            begin: b,
            end: tags.len(),
        });
    }
    SpanSet::from_sorted(spans)
}

/// Tag transitions that decode without repair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransitionMask {
    /// `allowed[from][to]`
    pub allowed: [[bool; 5]; 5],
    pub start: [bool; 5],
    pub end: [bool; 5],
}

impl TransitionMask {
    pub fn allows(&self, from: Tag5, to: Tag5) -> bool {
        self.allowed[from.index()][to.index()]
    }

    pub fn admits(&self, tags: &[Tag5]) -> bool {
        match (tags.first(), tags.last()) {
            (Some(&first), Some(&last)) => {
                self.start[first.index()]
                    && self.end[last.index()]
                    && tags.windows(2).all(|w| self.allows(w[0], w[1]))
            }
            _ => true,
        }
    }
}

pub fn transition_mask() -> TransitionMask {
    let mut allowed = [[false; 5]; 5];
    let mut start = [false; 5];
    let mut end = [false; 5];
    for from in Tag5::ALL {
        for to in Tag5::ALL {
            // inside an open span only Inside/End may follow
            let closes = matches!(to, Tag5::Singleton | Tag5::Begin | Tag5::Outside);
            allowed[from.index()][to.index()] = from.leaves_open() != closes;
        }
        start[from.index()] = matches!(from, Tag5::Singleton | Tag5::Begin | Tag5::Outside);
        end[from.index()] = !from.leaves_open();
    }
    TransitionMask {
        allowed,
        start,
        end,
    }
}

#[cfg(test)]
mod tests {
    use super::Tag5::*;
    use super::*;

    fn set(pairs: &[(usize, usize)]) -> SpanSet {
        SpanSet::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(*encode_spans(&set(&[]), 3).unwrap(), [Outside; 3]);
        assert_eq!(
            *encode_spans(&set(&[(2, 2)]), 3).unwrap(),
            [Outside, Singleton, Outside]
        );
        let running = [
            Outside, Outside, Begin, Inside, End, Outside, Outside, Outside, Begin, Inside, Inside,
            End, Outside, Outside,
        ];
        assert_eq!(*encode_spans(&set(&[(3, 5), (9, 12)]), 14).unwrap(), running);
        assert_eq!(decode_tags(&running), set(&[(3, 5), (9, 12)]));
        assert!(encode_spans(&set(&[(2, 4)]), 3).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_tags(&[Outside, Singleton, Outside]), set(&[(2, 2)]));
        assert_eq!(decode_tags(&[Inside, End, Outside]), set(&[(1, 2)]));
        assert_eq!(decode_tags(&[]), set(&[]));
    }

    #[test]
    fn repair_cases() {
        // End without an open span becomes a singleton
        assert_eq!(decode_tags(&[End, Outside]), set(&[(1, 1)]));
        // Begin left open at the end of the sequence closes at N
        assert_eq!(decode_tags(&[Outside, Begin, Inside]), set(&[(2, 3)]));
        // an open span is closed by Singleton / Begin / Outside
        assert_eq!(decode_tags(&[Begin, Singleton]), set(&[(1, 1), (2, 2)]));
        assert_eq!(decode_tags(&[Begin, Begin, End]), set(&[(1, 1), (2, 3)]));
        assert_eq!(decode_tags(&[Begin, Outside]), set(&[(1, 1)]));
    }

    #[test]
    fn start_continue_examples() {
        use Tag3 as T;
        assert_eq!(
            decode_start_continue(&[T::Start, T::Continue, T::Outside, T::Start]),
            set(&[(1, 2), (4, 4)])
        );
        assert_eq!(decode_start_continue(&[T::Continue, T::Continue]), set(&[(1, 2)]));
        assert_eq!(decode_start_continue(&[T::Start, T::Start]), set(&[(1, 1), (2, 2)]));
    }

    #[test]
    fn mask_examples() {
        let m = transition_mask();
        assert!(!m.allows(Begin, Outside));
        assert!(!m.allows(Outside, Inside));
        assert!(m.allows(Begin, Inside) && m.allows(Begin, End));
        assert!(m.allows(Outside, Outside) && m.allows(Outside, Begin) && m.allows(Outside, Singleton));
        let ends: Vec<_> = Tag5::ALL.into_iter().filter(|t| m.end[t.index()]).collect();
        assert_eq!(ends, vec![Singleton, End, Outside]);
        let starts: Vec<_> = Tag5::ALL.into_iter().filter(|t| m.start[t.index()]).collect();
        assert_eq!(starts, vec![Singleton, Begin, Outside]);
    }

    #[test]
    fn tag_names() {
        for t in Tag5::ALL {
            assert_eq!(t.as_str().parse::<Tag5>().unwrap(), t);
        }
        for t in Tag3::ALL {
            assert_eq!(t.as_str().parse::<Tag3>().unwrap(), t);
        }
        assert!("X".parse::<Tag5>().is_err());
        assert_eq!(TagSequence::new(vec![Begin, End]).to_string(), "B E");
    }
}
