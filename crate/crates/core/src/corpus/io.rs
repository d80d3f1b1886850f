use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::validate::Validator;
use super::{
    AnnotationRecord, Corpus, CorpusError, Document, InputAnnotations, InputKey, Policy,
    Predictions, RawInput, SpanSet,
};
use crate::tags::TagSequence;

/// Reads corpus JSONL without checking invariants. Blank lines are skipped.
/// Each entry carries its 1-based line number.
pub fn read_raw<R: BufRead>(reader: R) -> Result<Vec<(usize, RawInput)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawInput =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
        out.push((i + 1, raw));
    }
    Ok(out)
}

/// Parses corpus JSONL, failing on the first structural violation.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let raw = read_raw(reader)?;
    let mut validator = Validator::default();
    let mut docs: HashMap<String, Arc<Document>> = HashMap::new();
    let mut inputs = Vec::with_capacity(raw.len());
    for (line, r) in raw {
        if let Some(violation) = validator.check(&r, Policy::Lenient).into_iter().next() {
            return Err(CorpusError::Invalid { line, violation });
        }
        let document = docs
            .entry(r.doc_id.clone())
            .or_insert_with(|| {
                Arc::new(Document {
                    doc_id: r.doc_id.clone(),
                    words: r.words,
                })
            })
            .clone();
        let records = r
            .annotations
            .into_iter()
            .map(|a| AnnotationRecord {
                annotator_id: a.annotator_id,
                spans: SpanSet::from_pairs(a.spans).expect("validated"),
            })
            .collect();
        inputs.push(InputAnnotations {
            document,
            label: r.label,
            records,
        });
    }
    Ok(Corpus::from_valid(inputs))
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<(), CorpusError> {
    for raw in corpus.to_raw() {
        serde_json::to_writer(&mut writer, &raw).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// One predictions JSONL line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub label: String,
    pub spans: Vec<(usize, usize)>,
}

/// Reads predictions JSONL. Spans may arrive unsorted but must not overlap.
/// Document bounds are checked later, against a corpus.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<Predictions, CorpusError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let rec: PredictionRecord = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Json { line: line_no, source })?;
        let spans = SpanSet::from_pairs(rec.spans).map_err(|e| CorpusError::Prediction {
            line: line_no,
            message: e.to_string(),
        })?;
        let key = InputKey::new(rec.doc_id, rec.label);
        if out.contains_key(&key) {
            return Err(CorpusError::Prediction {
                line: line_no,
                message: format!("duplicate prediction for {key}"),
            });
        }
        out.insert(key, spans);
    }
    Ok(out)
}

/// Writes one predictions line per key, in iteration order.
pub fn write_predictions<'a, I, W>(entries: I, mut writer: W) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = (&'a InputKey, &'a SpanSet)>,
    W: Write,
{
    for (key, spans) in entries {
        let rec = PredictionRecord {
            doc_id: key.doc_id.clone(),
            label: key.label.clone(),
            spans: spans.to_pairs(),
        };
        serde_json::to_writer(&mut writer, &rec).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `word gold pred` lines in CoNLL-2000 chunking layout, one blank
/// line after every sequence.
pub fn export_conll<'a, I, W>(inputs: I, mut writer: W) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = (&'a Document, &'a TagSequence, &'a TagSequence)>,
    W: Write,
{
    for (doc, gold, pred) in inputs {
        for got in [gold.len(), pred.len()] {
            if got != doc.len() {
                return Err(CorpusError::LengthMismatch {
                    doc_id: doc.doc_id.clone(),
                    n: doc.len(),
                    got,
                });
            }
        }
        for ((word, g), p) in doc.words.iter().zip(gold.iter()).zip(pred.iter()) {
            writeln!(writer, "{} {} {}", word, g.conll_chunk(), p.conll_chunk())?;
        }
        writer.write_all(b"\n")?;
    }
    Ok(())
}
