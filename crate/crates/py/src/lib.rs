//! Python bindings. Spans are `(begin, end)` tuples, 1-based and inclusive;
//! predictions are dicts keyed by `(doc_id, label)`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use spanlab_core::aggregate;
use spanlab_core::corpus::{
    parse_corpus, split_folds, validate, write_corpus, InputKey, Policy, Predictions, SpanSet,
};
use spanlab_core::evaluate::{self, GoldType, Level};
use spanlab_core::synth;
use spanlab_core::tagger::{self, CrfConfig, Hyperparams, LabeledInput, TrainingMode};
use spanlab_core::tags::{self, Tag3, Tag5};

type Pairs = Vec<(usize, usize)>;
type PyPredictions = BTreeMap<(String, String), Pairs>;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl ToString) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn span_set(pairs: Pairs) -> PyResult<SpanSet> {
    SpanSet::from_pairs(pairs).map_err(value_err)
}

fn level(s: &str) -> PyResult<Level> {
    s.parse().map_err(value_err)
}

fn to_py(preds: &Predictions) -> PyPredictions {
    preds
        .iter()
        .map(|(k, s)| ((k.doc_id.clone(), k.label.clone()), s.to_pairs()))
        .collect()
}

fn from_py(preds: HashMap<(String, String), Pairs>) -> PyResult<Predictions> {
    preds
        .into_iter()
        .map(|((d, l), p)| Ok((InputKey::new(d, l), span_set(p)?)))
        .collect()
}

fn summary(report: &evaluate::EvalReport) -> HashMap<&'static str, f64> {
    HashMap::from([
        ("precision", report.scores.precision),
        ("recall", report.scores.recall),
        ("f1", report.scores.f1),
        ("matched", report.counts.matched as f64),
        ("predicted", report.counts.predicted as f64),
        ("gold", report.counts.gold as f64),
    ])
}

/// A multiply-annotated corpus of (document, label) inputs.
#[pyclass(frozen)]
struct Corpus {
    inner: spanlab_core::Corpus,
}

#[pymethods]
impl Corpus {
    /// Parses corpus JSONL text.
    #[staticmethod]
    fn loads(text: &str) -> PyResult<Self> {
        let inner = parse_corpus(text.as_bytes()).map_err(value_err)?;
        Ok(Corpus { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(io_err)?;
        let inner = parse_corpus(BufReader::new(file)).map_err(value_err)?;
        Ok(Corpus { inner })
    }

    fn dumps(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_corpus(&self.inner, &mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        write_corpus(&self.inner, &mut w).map_err(value_err)?;
        w.flush().map_err(io_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn keys(&self) -> Vec<(String, String)> {
        self.inner
            .iter()
            .map(|i| (i.document.doc_id.clone(), i.label.clone()))
            .collect()
    }

    fn doc_ids(&self) -> Vec<String> {
        self.inner.doc_ids().into_iter().map(String::from).collect()
    }

    fn words(&self, doc_id: &str, label: &str) -> PyResult<Vec<String>> {
        Ok(self.input(doc_id, label)?.words().to_vec())
    }

    /// `{annotator_id: spans}` for one input.
    fn annotations(&self, doc_id: &str, label: &str) -> PyResult<BTreeMap<String, Pairs>> {
        Ok(self
            .input(doc_id, label)?
            .records
            .iter()
            .map(|r| (r.annotator_id.clone(), r.spans.to_pairs()))
            .collect())
    }

    /// Violations as messages; `policy` is "annotator-input" or "lenient".
    #[pyo3(signature = (policy = "annotator-input"))]
    fn validate(&self, policy: &str) -> PyResult<Vec<String>> {
        let policy = match policy {
            "annotator-input" => Policy::AnnotatorInput,
            "lenient" => Policy::Lenient,
            other => return Err(value_err(format!("unknown policy {other:?}"))),
        };
        Ok(validate(&self.inner, policy).iter().map(|v| v.to_string()).collect())
    }

    /// Majority-voted spans of every input.
    fn majority(&self) -> PyResult<PyPredictions> {
        self.inner
            .iter()
            .map(|i| {
                let mv = aggregate::majority_vote(&i.records, i.n()).map_err(value_err)?;
                Ok(((i.document.doc_id.clone(), i.label.clone()), mv.to_pairs()))
            })
            .collect()
    }

    /// `(train, dev, test)` corpora for each of `k` document-level folds.
    #[pyo3(signature = (k, dev_fraction = 0.1, seed = 0))]
    fn split(&self, k: usize, dev_fraction: f64, seed: u64) -> PyResult<Vec<(Corpus, Corpus, Corpus)>> {
        let plan = split_folds(&self.inner, k, dev_fraction, seed).map_err(value_err)?;
        Ok((0..k)
            .map(|f| {
                let (a, b, c) = plan.split(&self.inner, f);
                (Corpus { inner: a }, Corpus { inner: b }, Corpus { inner: c })
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus({} inputs, {} documents)",
            self.inner.len(),
            self.inner.doc_ids().len()
        )
    }
}

impl Corpus {
    fn input(&self, doc_id: &str, label: &str) -> PyResult<&spanlab_core::InputAnnotations> {
        self.inner
            .iter()
            .find(|i| i.document.doc_id == doc_id && i.label == label)
            .ok_or_else(|| value_err(format!("no input {doc_id}/{label}")))
    }
}

/// A trained CRF span tagger.
#[pyclass(frozen)]
struct Model {
    inner: tagger::CrfModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (
        corpus, mode = "mv", learning_rate = 0.1, batch_size = 8, epochs = 10,
        l2 = 1e-4, seed = 0, hash_bits = 18, constrained = true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        corpus: &Corpus,
        mode: &str,
        learning_rate: f64,
        batch_size: usize,
        epochs: usize,
        l2: f64,
        seed: u64,
        hash_bits: u32,
        constrained: bool,
    ) -> PyResult<Self> {
        let mode: TrainingMode = mode.parse().map_err(value_err)?;
        let hp = Hyperparams { learning_rate, batch_size, epochs, l2 };
        let config = CrfConfig { hash_bits, constrained };
        let inner = py
            .detach(|| tagger::train(&corpus.inner, mode, &hp, &config, seed))
            .map_err(value_err)?;
        Ok(Model { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(io_err)?;
        let inner = tagger::read_model(BufReader::new(file)).map_err(value_err)?;
        Ok(Model { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        tagger::write_model(&self.inner, &mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    #[getter]
    fn template(&self) -> String {
        self.inner.template().to_owned()
    }

    fn predict(&self, py: Python<'_>, corpus: &Corpus) -> PyResult<PyPredictions> {
        let preds = py
            .detach(|| tagger::predict_corpus(&self.inner, &corpus.inner))
            .map_err(value_err)?;
        Ok(to_py(&preds))
    }

    /// Spans for one tokenized text under `label`.
    fn predict_words(&self, words: Vec<String>, label: &str) -> PyResult<Pairs> {
        let spans = tagger::predict(&self.inner, &LabeledInput::new(&words, label)).map_err(value_err)?;
        Ok(spans.to_pairs())
    }
}

#[pyfunction]
fn encode_spans(spans: Pairs, n: usize) -> PyResult<Vec<&'static str>> {
    let seq = tags::encode_spans(&span_set(spans)?, n).map_err(value_err)?;
    Ok(seq.iter().map(|t| t.as_str()).collect())
}

/// Decodes S/B/E/I/O tags, repairing stray Inside or End tags.
#[pyfunction]
fn decode_tags(tags: Vec<String>) -> PyResult<Pairs> {
    let seq = tags
        .iter()
        .map(|t| t.parse::<Tag5>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    Ok(tags::decode_tags(&seq).to_pairs())
}

/// Decodes ST/CO/O tags.
#[pyfunction]
fn decode_start_continue(tags: Vec<String>) -> PyResult<Pairs> {
    let seq = tags
        .iter()
        .map(|t| t.parse::<Tag3>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    Ok(tags::decode_start_continue(&seq).to_pairs())
}

#[pyfunction]
fn majority_vote(span_sets: Vec<Pairs>, n: usize) -> PyResult<Pairs> {
    let sets = span_sets.into_iter().map(span_set).collect::<PyResult<Vec<_>>>()?;
    Ok(aggregate::majority_vote_sets(&sets, n).map_err(value_err)?.to_pairs())
}

/// `(matched, predicted, gold)`.
#[pyfunction]
#[pyo3(signature = (pred, gold, level = "span"))]
fn match_counts(pred: Pairs, gold: Pairs, level: &str) -> PyResult<(usize, usize, usize)> {
    let c = evaluate::match_counts(&span_set(pred)?, &span_set(gold)?, self::level(level)?);
    Ok((c.matched, c.predicted, c.gold))
}

/// `(precision, recall, f1)` from counts.
#[pyfunction]
fn prf(matched: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let s = evaluate::prf(evaluate::MatchCounts::new(matched, predicted, gold));
    (s.precision, s.recall, s.f1)
}

#[pyfunction(name = "evaluate")]
#[pyo3(signature = (predictions, corpus, level = "span", gold = "majority"))]
fn evaluate_py(
    predictions: HashMap<(String, String), Pairs>,
    corpus: &Corpus,
    level: &str,
    gold: &str,
) -> PyResult<HashMap<&'static str, f64>> {
    let gold: GoldType = gold.parse().map_err(value_err)?;
    let preds = from_py(predictions)?;
    let report =
        evaluate::evaluate(&preds, &corpus.inner, self::level(level)?, gold).map_err(value_err)?;
    Ok(summary(&report))
}

#[pyfunction]
#[pyo3(signature = (corpus, level = "span"))]
fn expert(corpus: &Corpus, level: &str) -> PyResult<HashMap<&'static str, f64>> {
    let report = evaluate::expert_estimate(&corpus.inner, self::level(level)?).map_err(value_err)?;
    Ok(summary(&report))
}

#[pyfunction]
#[pyo3(signature = (corpus, seed = 0))]
fn random_baseline(corpus: &Corpus, seed: u64) -> PyPredictions {
    to_py(&tagger::random_baseline(&corpus.inner, seed))
}

/// Synthetic corpus and true spans from key = value config text.
#[pyfunction]
#[pyo3(signature = (config = "", seed = None))]
fn synthesize(config: &str, seed: Option<u64>) -> PyResult<(Corpus, PyPredictions)> {
    let (mut cfg, noise) = synth::parse_synth_config(config).map_err(value_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (corpus, truth) = synth::generate(&cfg, &noise).map_err(value_err)?;
    let truth = truth
        .iter()
        .map(|t| ((t.document.doc_id.clone(), t.label.clone()), t.truth.to_pairs()))
        .collect();
    Ok((Corpus { inner: corpus }, truth))
}

#[pymodule]
fn spanlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(encode_spans, m)?)?;
    m.add_function(wrap_pyfunction!(decode_tags, m)?)?;
    m.add_function(wrap_pyfunction!(decode_start_continue, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(match_counts, m)?)?;
    m.add_function(wrap_pyfunction!(prf, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_py, m)?)?;
    m.add_function(wrap_pyfunction!(expert, m)?)?;
    m.add_function(wrap_pyfunction!(random_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
