//! Synthetic corpora with known true spans and simulated annotator noise.
//!
//! Words are `w<k>` tokens over a fixed vocabulary. Inside true spans, each
//! word is replaced with probability `trigger_rate` by a trigger word tied
//! to the input's label (`t<label>_<j>`), which gives a feature-based tagger
//! something to learn.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{
    AnnotationRecord, Corpus, Document, InputAnnotations, InputKey, Span, SpanSet,
    MIN_ANNOTATOR_SPAN,
};
use crate::kv::{KvError, KvFile};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Kv(#[from] KvError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    pub n_labels: usize,
    /// Mean number of labels per document.
    pub labels_per_doc: f64,
    pub spans_min: usize,
    pub spans_max: usize,
    pub span_len_min: usize,
    pub span_len_max: usize,
    pub annotators: usize,
    pub trigger_rate: f64,
    pub triggers_per_label: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_docs: 700,
            vocab_size: 500,
            doc_len_min: 15,
            doc_len_max: 40,
            n_labels: 8,
            labels_per_doc: 3.0,
            spans_min: 1,
            spans_max: 2,
            span_len_min: 3,
            span_len_max: 6,
            annotators: 5,
            trigger_rate: 0.6,
            triggers_per_label: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseModel {
    /// Probability an annotator omits a true span.
    pub p_drop: f64,
    /// Largest boundary shift, in words.
    pub jitter: usize,
    /// Probability each boundary is shifted.
    pub jitter_prob: f64,
    /// Expected number of spurious spans per annotation.
    pub p_spurious: f64,
    /// Probability an annotator skips the input altogether.
    pub p_skip: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            p_drop: 0.0,
            jitter: 0,
            jitter_prob: 0.0,
            p_spurious: 0.0,
            p_skip: 0.0,
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            p_drop: 0.2,
            jitter: 1,
            jitter_prob: 0.3,
            p_spurious: 0.1,
            p_skip: 0.0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SynthError::Config(format!("{name}={p} is not a probability")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.n_docs == 0 || self.vocab_size == 0 || self.n_labels == 0 || self.annotators == 0 {
            return bad("n_docs, vocab_size, n_labels and annotators must be positive".into());
        }
        if self.span_len_min < MIN_ANNOTATOR_SPAN || self.span_len_min > self.span_len_max {
            return bad(format!(
                "span lengths must satisfy {MIN_ANNOTATOR_SPAN} <= span_len_min <= span_len_max"
            ));
        }
        if self.doc_len_min > self.doc_len_max || self.spans_min > self.spans_max {
            return bad("min must not exceed max".into());
        }
        if self.spans_max == 0 {
            return bad("spans_max must be positive".into());
        }
        // worst case: longest spans, one-word gaps between them
        let need = self.spans_max * self.span_len_max + self.spans_max - 1;
        if need > self.doc_len_min {
            return bad(format!(
                "{} spans of up to {} words need {need} words but doc_len_min is {}",
                self.spans_max, self.span_len_max, self.doc_len_min
            ));
        }
        if !(self.labels_per_doc >= 1.0 && self.labels_per_doc <= self.n_labels as f64) {
            return bad(format!(
                "labels_per_doc {} must lie in [1, n_labels]",
                self.labels_per_doc
            ));
        }
        check_prob("trigger_rate", self.trigger_rate)?;
        if self.trigger_rate > 0.0 && self.triggers_per_label == 0 {
            return bad("triggers_per_label must be positive when trigger_rate > 0".into());
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.n_labels).map(|l| format!("LABEL_{l:02}")).collect()
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        check_prob("p_drop", self.p_drop)?;
        check_prob("jitter_prob", self.jitter_prob)?;
        check_prob("p_skip", self.p_skip)?;
        if !(self.p_spurious >= 0.0 && self.p_spurious.is_finite()) {
            return Err(SynthError::Config(format!(
                "p_spurious={} must be non-negative",
                self.p_spurious
            )));
        }
        if self.jitter_prob > 0.0 && self.jitter == 0 {
            return Err(SynthError::Config("jitter_prob > 0 needs jitter >= 1".into()));
        }
        Ok(())
    }
}

/// Reads both configs from a flat key = value file. Unknown keys are errors.
pub fn parse_synth_config(text: &str) -> Result<(SynthConfig, NoiseModel), SynthError> {
    let mut kv = KvFile::parse(text)?;
    let d = SynthConfig::default();
    let config = SynthConfig {
        n_docs: kv.get_or("n_docs", d.n_docs)?,
        vocab_size: kv.get_or("vocab_size", d.vocab_size)?,
        doc_len_min: kv.get_or("doc_len_min", d.doc_len_min)?,
        doc_len_max: kv.get_or("doc_len_max", d.doc_len_max)?,
        n_labels: kv.get_or("n_labels", d.n_labels)?,
        labels_per_doc: kv.get_or("labels_per_doc", d.labels_per_doc)?,
        spans_min: kv.get_or("spans_min", d.spans_min)?,
        spans_max: kv.get_or("spans_max", d.spans_max)?,
        span_len_min: kv.get_or("span_len_min", d.span_len_min)?,
        span_len_max: kv.get_or("span_len_max", d.span_len_max)?,
        annotators: kv.get_or("annotators", d.annotators)?,
        trigger_rate: kv.get_or("trigger_rate", d.trigger_rate)?,
        triggers_per_label: kv.get_or("triggers_per_label", d.triggers_per_label)?,
        seed: kv.get_or("seed", d.seed)?,
    };
    let n = NoiseModel::default();
    let noise = NoiseModel {
        p_drop: kv.get_or("p_drop", n.p_drop)?,
        jitter: kv.get_or("jitter", n.jitter)?,
        jitter_prob: kv.get_or("jitter_prob", n.jitter_prob)?,
        p_spurious: kv.get_or("p_spurious", n.p_spurious)?,
        p_skip: kv.get_or("p_skip", n.p_skip)?,
    };
    kv.finish()?;
    config.validate()?;
    noise.validate()?;
    Ok((config, noise))
}

/// A labelled input with its true spans.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthInput {
    pub document: Arc<Document>,
    pub label: String,
    pub truth: SpanSet,
}

impl TruthInput {
    pub fn key(&self) -> InputKey {
        InputKey::new(self.document.doc_id.clone(), self.label.clone())
    }
}

/// `count` non-overlapping spans with at least one word between them,
/// uniformly over arrangements for the drawn lengths.
fn place_spans<R: Rng + ?Sized>(n: usize, lengths: &[usize], rng: &mut R) -> Vec<Span> {
    let k = lengths.len();
    if k == 0 {
        return Vec::new();
    }
    let used: usize = lengths.iter().sum::<usize>() + k - 1;
    let free = n - used;
    let mut picks = sample(rng, free + k, k).into_vec();
    picks.sort_unstable();
    let mut spans = Vec::with_capacity(k);
    let mut cursor = 1;
    for (j, (&len, &pick)) in lengths.iter().zip(&picks).enumerate() {
        let gap = pick - j; // non-decreasing offsets in [0, free]
        let prev_gap = if j == 0 { 0 } else { picks[j - 1] - (j - 1) };
        cursor += gap - prev_gap;
        spans.push(Span {
            begin: cursor,
            end: cursor + len - 1,
        });
        cursor += len + 1;
    }
    spans
}

pub fn generate_truth<R: Rng + ?Sized>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<TruthInput>, SynthError> {
    config.validate()?;
    let labels = config.labels();
    let extra_labels = if config.n_labels > 1 {
        let p = (config.labels_per_doc - 1.0) / (config.n_labels - 1) as f64;
        Some(
            Binomial::new((config.n_labels - 1) as u64, p)
                .map_err(|e| SynthError::Config(e.to_string()))?,
        )
    } else {
        None
    };

    let mut out = Vec::new();
    for d in 0..config.n_docs {
        let n = rng.random_range(config.doc_len_min..=config.doc_len_max);
        let n_doc_labels = 1 + extra_labels.as_ref().map_or(0, |b| b.sample(rng) as usize);
        let mut chosen = sample(rng, config.n_labels, n_doc_labels).into_vec();
        chosen.sort_unstable();

        let mut words: Vec<String> = (0..n)
            .map(|_| format!("w{}", rng.random_range(0..config.vocab_size)))
            .collect();
        let mut doc_truth = Vec::with_capacity(chosen.len());
        for &l in &chosen {
            let count = rng.random_range(config.spans_min..=config.spans_max);
            let lengths: Vec<usize> = (0..count)
                .map(|_| rng.random_range(config.span_len_min..=config.span_len_max))
                .collect();
            let spans = place_spans(n, &lengths, rng);
            for s in &spans {
                for w in s.begin..=s.end {
                    if config.trigger_rate > 0.0 && rng.random_bool(config.trigger_rate) {
                        let j = rng.random_range(0..config.triggers_per_label);
                        words[w - 1] = format!("t{l}_{j}");
                    }
                }
            }
            doc_truth.push((l, SpanSet::from_sorted(spans)));
        }
        let document = Arc::new(Document {
            doc_id: format!("doc{d:05}"),
            words,
        });
        out.extend(doc_truth.into_iter().map(|(l, truth)| TruthInput {
            document: document.clone(),
            label: labels[l].clone(),
            truth,
        }));
    }
    Ok(out)
}

/// Clips to the document, fixes reversed spans, and widens to the minimum
/// annotator span length.
fn repair_span(mut b: i64, mut e: i64, n: usize) -> Span {
    let n = n as i64;
    b = b.clamp(1, n);
    e = e.clamp(1, n);
    if b > e {
        std::mem::swap(&mut b, &mut e);
    }
    let min = MIN_ANNOTATOR_SPAN as i64;
    if e - b + 1 < min {
        e = (b + min - 1).min(n);
        b = (e - min + 1).max(1);
    }
    Span {
        begin: b as usize,
        end: e as usize,
    }
}

fn merge_overlapping(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort_unstable();
    let mut out: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if last.end >= s.begin => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

fn annotate<R: Rng + ?Sized>(
    truth: &SpanSet,
    n: usize,
    config: &SynthConfig,
    noise: &NoiseModel,
    rng: &mut R,
) -> SpanSet {
    let mut spans = Vec::new();
    for s in truth {
        if noise.p_drop > 0.0 && rng.random_bool(noise.p_drop) {
            continue;
        }
        let mut bounds = [s.begin as i64, s.end as i64];
        for x in &mut bounds {
            if noise.jitter_prob > 0.0 && rng.random_bool(noise.jitter_prob) {
                let shift = rng.random_range(1..=noise.jitter) as i64;
                *x += if rng.random_bool(0.5) { shift } else { -shift };
            }
        }
        spans.push(repair_span(bounds[0], bounds[1], n));
    }
    let mut spans = merge_overlapping(spans);

    if noise.p_spurious > 0.0 {
        let count = Poisson::new(noise.p_spurious)
            .map(|p| p.sample(rng) as usize)
            .unwrap_or(0);
        for _ in 0..count {
            let max_len = config.span_len_max.min(n);
            let len = rng.random_range(config.span_len_min.min(max_len)..=max_len);
            let begin = rng.random_range(1..=n - len + 1);
            let cand = Span {
                begin,
                end: begin + len - 1,
            };
            if spans.iter().all(|s| !s.overlaps(&cand)) {
                spans.push(cand);
            }
        }
        spans.sort_unstable();
    }
    SpanSet::from_sorted(spans)
}

/// Simulates `config.annotators` noisy annotators per input. Annotator ids
/// are `a1`, `a2`, ...; if every annotator would skip an input, `a1` keeps it.
pub fn simulate_annotators<R: Rng + ?Sized>(
    truth: &[TruthInput],
    config: &SynthConfig,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Corpus, SynthError> {
    noise.validate()?;
    let mut inputs = Vec::with_capacity(truth.len());
    for t in truth {
        let n = t.document.len();
        let mut skip: Vec<bool> = (0..config.annotators)
            .map(|_| noise.p_skip > 0.0 && rng.random_bool(noise.p_skip))
            .collect();
        if skip.iter().all(|&s| s) {
            skip[0] = false;
        }
        let records = skip
            .iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(a, _)| AnnotationRecord {
                annotator_id: format!("a{}", a + 1),
                spans: annotate(&t.truth, n, config, noise, rng),
            })
            .collect();
        inputs.push(InputAnnotations {
            document: t.document.clone(),
            label: t.label.clone(),
            records,
        });
    }
    Ok(Corpus::from_valid(inputs))
}

/// Truth and annotated corpus from one seeded stream.
pub fn generate(
    config: &SynthConfig,
    noise: &NoiseModel,
) -> Result<(Corpus, Vec<TruthInput>), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = generate_truth(config, &mut rng)?;
    let corpus = simulate_annotators(&truth, config, noise, &mut rng)?;
    Ok((corpus, truth))
}
