use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{RawInput, Span};

/// Annotators were required to mark at least this many words per span.
pub const MIN_ANNOTATOR_SPAN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Structural checks plus the minimum annotator span length.
    AnnotatorInput,
    /// Structural checks only (bounds, overlap, uniqueness).
    Lenient,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyDocument,
    NewlineInWord { word: usize },
    ConflictingWords,
    DuplicateInput,
    NoAnnotations,
    DuplicateAnnotator,
    BeginOutOfRange { begin: usize },
    Reversed { begin: usize, end: usize },
    EndExceeds { end: usize, n: usize },
    Overlap { first: Span, second: Span },
    TooShort { span: Span },
}

impl ViolationKind {
    pub fn is_structural(&self) -> bool {
        !matches!(self, ViolationKind::TooShort { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub doc_id: String,
    pub label: String,
    pub annotator_id: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ViolationKind::*;
        if self.kind == DuplicateInput {
            return write!(f, "duplicate input {}/{}", self.doc_id, self.label);
        }
        write!(f, "{}/{}", self.doc_id, self.label)?;
        if let Some(a) = &self.annotator_id {
            write!(f, "/{a}")?;
        }
        f.write_str(": ")?;
        match &self.kind {
            EmptyDocument => f.write_str("document has no words"),
            NewlineInWord { word } => write!(f, "word {word} contains a newline"),
            ConflictingWords => f.write_str("doc_id seen before with different words"),
            DuplicateInput => unreachable!(),
            NoAnnotations => f.write_str("no annotation records"),
            DuplicateAnnotator => f.write_str("duplicate annotator"),
            BeginOutOfRange { begin } => write!(f, "invalid span begin {begin} (1-based)"),
            Reversed { begin, end } => write!(f, "span begin {begin} is after end {end}"),
            EndExceeds { end, n } => write!(f, "span end {end} exceeds N={n}"),
            Overlap { first, second } => write!(f, "overlap between {first} and {second}"),
            TooShort { span } => write!(
                f,
                "span {span} shorter than {MIN_ANNOTATOR_SPAN} words"
            ),
        }
    }
}

/// Stateful checker; cross-input invariants need the inputs seen so far.
#[derive(Default)]
pub(crate) struct Validator {
    inputs: HashSet<(String, String)>,
    docs: HashMap<String, Vec<String>>,
}

impl Validator {
    pub(crate) fn check(&mut self, raw: &RawInput, policy: Policy) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |annotator: Option<&str>, kind: ViolationKind| {
            out.push(Violation {
                doc_id: raw.doc_id.clone(),
                label: raw.label.clone(),
                annotator_id: annotator.map(str::to_owned),
                kind,
            })
        };

        let n = raw.words.len();
        if n == 0 {
            push(None, ViolationKind::EmptyDocument);
        }
        for (i, w) in raw.words.iter().enumerate() {
            if w.contains('\n') || w.contains('\r') {
                push(None, ViolationKind::NewlineInWord { word: i + 1 });
            }
        }
        match self.docs.get(&raw.doc_id) {
            Some(words) if *words != raw.words => push(None, ViolationKind::ConflictingWords),
            Some(_) => {}
            None => {
                self.docs.insert(raw.doc_id.clone(), raw.words.clone());
            }
        }
        if !self.inputs.insert((raw.doc_id.clone(), raw.label.clone())) {
            push(None, ViolationKind::DuplicateInput);
        }
        if raw.annotations.is_empty() {
            push(None, ViolationKind::NoAnnotations);
        }

        let mut annotators = HashSet::new();
        for record in &raw.annotations {
            let who = Some(record.annotator_id.as_str());
            if !annotators.insert(record.annotator_id.as_str()) {
                push(who, ViolationKind::DuplicateAnnotator);
            }
            let mut well_formed = Vec::new();
            for &(begin, end) in &record.spans {
                if begin == 0 {
                    push(who, ViolationKind::BeginOutOfRange { begin });
                } else if begin > end {
                    push(who, ViolationKind::Reversed { begin, end });
                } else if end > n {
                    push(who, ViolationKind::EndExceeds { end, n });
                } else {
                    well_formed.push(Span { begin, end });
                }
            }
            well_formed.sort_unstable();
            for pair in well_formed.windows(2) {
                if pair[0].end >= pair[1].begin {
                    push(
                        who,
                        ViolationKind::Overlap {
                            first: pair[0],
                            second: pair[1],
                        },
                    );
                }
            }
            if policy == Policy::AnnotatorInput {
                for span in well_formed.iter().filter(|s| s.len() < MIN_ANNOTATOR_SPAN) {
                    push(who, ViolationKind::TooShort { span: *span });
                }
            }
        }
        out
    }
}

/// Reports every violation in raw corpus lines. Empty means valid.
pub fn validate_raw(raw: &[RawInput], policy: Policy) -> Vec<Violation> {
    let mut validator = Validator::default();
    raw.iter()
        .flat_map(|r| validator.check(r, policy))
        .collect()
}

/// Reports violations in an already-parsed corpus. Structural violations
/// cannot occur after parsing, so this is mostly the span-length check.
pub fn validate(corpus: &super::Corpus, policy: Policy) -> Vec<Violation> {
    validate_raw(&corpus.to_raw(), policy)
}
