//! Label-conditioned linear-chain CRF span tagger and the random baseline.

mod crf;
mod features;
mod model_file;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crf::{
    forward_backward, forward_log_z, log_potentials, loss_and_gradient, viterbi, CrfModel,
    ForwardBackward, Gradient, Potentials,
};
pub use features::{
    extract_features, feature_strings, hash_feature, template_version, FeatureSequence,
    LabeledInput, DEFAULT_HASH_BITS, MAX_HASH_BITS, TEMPLATE_NAME,
};
pub use model_file::{read_model, write_model};

use crate::aggregate::majority_vote;
use crate::corpus::{Corpus, InputAnnotations, Predictions, SpanSet};
use crate::evaluate::{evaluate_corpus, Level};
use crate::tags::{decode_start_continue, decode_tags, encode_spans, Tag3, Tag5, TagSequence};
use crf::{accumulate_example, potentials_scaled, GradBuffer};

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("feature template mismatch: model uses {model}, features use {features}")]
    TemplateMismatch { model: String, features: String },
    #[error("{features} feature positions but {tags} tags")]
    LengthMismatch { features: usize, tags: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("empty tuning grid")]
    EmptyGrid,
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// One example per input, targets are the majority-voted spans.
    Mv,
    /// One example per (input, annotator): repeated labelling.
    Rel,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::Mv => "mv",
            TrainingMode::Rel => "rel",
        }
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mv" => Ok(TrainingMode::Mv),
            "rel" => Ok(TrainingMode::Rel),
            _ => Err(format!("unknown training mode {s:?} (expected mv or rel)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            batch_size: 8,
            epochs: 10,
            l2: 1e-4,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TaggerError> {
        let bad = |m: String| Err(TaggerError::Hyperparams(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive".into());
        }
        if !(self.l2 >= 0.0 && self.learning_rate * self.l2 < 1.0) {
            return bad(format!(
                "l2 {} must be non-negative with learning_rate * l2 < 1",
                self.l2
            ));
        }
        Ok(())
    }
}

/// learning rate {0.01, 0.05, 0.1, 0.5} x batch size {1, 8, 32}.
pub fn default_grid() -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    for lr in [0.01, 0.05, 0.1, 0.5] {
        for batch in [1, 8, 32] {
            grid.push(Hyperparams {
                learning_rate: lr,
                batch_size: batch,
                ..Hyperparams::default()
            });
        }
    }
    grid
}

/// Model structure choices that are not tuned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub hash_bits: u32,
    /// Restrict inference to tag sequences that decode without repair.
    pub constrained: bool,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            hash_bits: DEFAULT_HASH_BITS,
            constrained: true,
        }
    }
}

pub fn labeled_input(input: &InputAnnotations) -> LabeledInput<'_> {
    LabeledInput::new(&input.document.words, &input.label)
}

/// (index of the input in the corpus, target spans) pairs, in corpus order.
pub fn training_targets(corpus: &Corpus, mode: TrainingMode) -> Result<Vec<(usize, SpanSet)>, TaggerError> {
    let mut out = Vec::new();
    for (i, input) in corpus.iter().enumerate() {
        match mode {
            TrainingMode::Mv => {
                let gold = majority_vote(&input.records, input.n())
                    .map_err(|e| TaggerError::Data(format!("{}: {e}", input.key())))?;
                out.push((i, gold));
            }
            TrainingMode::Rel => {
                out.extend(input.records.iter().map(|r| (i, r.spans.clone())));
            }
        }
    }
    Ok(out)
}

/// Per-epoch training objective (mean NLL plus L2 penalty) after each epoch.
pub type TrainTrace = Vec<f64>;

pub fn train(
    corpus: &Corpus,
    mode: TrainingMode,
    hp: &Hyperparams,
    config: &CrfConfig,
    seed: u64,
) -> Result<CrfModel, TaggerError> {
    train_impl(corpus, mode, hp, config, seed, false).map(|(m, _)| m)
}

/// As [`train`], also evaluating the full training objective after every
/// epoch.
pub fn train_traced(
    corpus: &Corpus,
    mode: TrainingMode,
    hp: &Hyperparams,
    config: &CrfConfig,
    seed: u64,
) -> Result<(CrfModel, TrainTrace), TaggerError> {
    train_impl(corpus, mode, hp, config, seed, true)
}

fn train_impl(
    corpus: &Corpus,
    mode: TrainingMode,
    hp: &Hyperparams,
    config: &CrfConfig,
    seed: u64,
    trace: bool,
) -> Result<(CrfModel, TrainTrace), TaggerError> {
    hp.validate()?;
    if config.hash_bits == 0 || config.hash_bits > MAX_HASH_BITS {
        return Err(TaggerError::Hyperparams(format!(
            "hash_bits {} out of range",
            config.hash_bits
        )));
    }
    if corpus.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    let bits = config.hash_bits;
    let feats: Vec<FeatureSequence> = corpus
        .inputs()
        .par_iter()
        .map(|input| extract_features(&labeled_input(input), bits))
        .collect();
    let examples: Vec<(usize, TagSequence)> = training_targets(corpus, mode)?
        .into_iter()
        .map(|(i, spans)| {
            let tags = encode_spans(&spans, corpus.inputs()[i].n()).expect("targets within bounds");
            (i, tags)
        })
        .collect();

    let mut model = CrfModel::zeros(bits, config.constrained);
    // actual weights are scale * v; L2 decay only touches the scale
    let mut v = std::mem::take(&mut model.weights);
    let mut scale = 1.0;
    let mut grad = GradBuffer::new(v.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let decay = 1.0 - hp.learning_rate * hp.l2;
    let mut history = Vec::new();

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            for &e in batch {
                let (i, tags) = &examples[e];
                accumulate_example(&v, scale, bits, config.constrained, &feats[*i], tags, &mut grad);
            }
            scale *= decay;
            let step = hp.learning_rate / (batch.len() as f64 * scale);
            for (idx, g) in grad.drain() {
                v[idx] -= step * g;
            }
            if scale < 1e-6 {
                v.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
        }
        if trace {
            history.push(objective(&v, scale, bits, config.constrained, hp.l2, &feats, &examples));
        }
    }
    v.iter_mut().for_each(|x| *x *= scale);
    model.weights = v;
    Ok((model, history))
}

fn objective(
    v: &[f64],
    scale: f64,
    bits: u32,
    constrained: bool,
    l2: f64,
    feats: &[FeatureSequence],
    examples: &[(usize, TagSequence)],
) -> f64 {
    let nll: f64 = examples
        .iter()
        .map(|(i, tags)| {
            let p = potentials_scaled(v, scale, bits, &feats[*i]);
            forward_backward(&p, constrained).log_z - p.score(tags)
        })
        .sum();
    let sq: f64 = v.iter().map(|x| x * x).sum::<f64>() * scale * scale;
    nll / examples.len() as f64 + 0.5 * l2 * sq
}

pub fn predict(model: &CrfModel, input: &LabeledInput<'_>) -> Result<SpanSet, TaggerError> {
    if input.words.is_empty() {
        return Ok(SpanSet::empty());
    }
    let feats = extract_features(input, model.hash_bits());
    let potentials = log_potentials(model, &feats)?;
    Ok(decode_tags(&viterbi(&potentials, model.constrained())))
}

/// Predictions for every input of `corpus`. Annotations are not read.
pub fn predict_corpus(model: &CrfModel, corpus: &Corpus) -> Result<Predictions, TaggerError> {
    let preds = corpus
        .inputs()
        .par_iter()
        .map(|input| Ok((input.key(), predict(model, &labeled_input(input))?)))
        .collect::<Result<Vec<_>, TaggerError>>()?;
    Ok(preds.into_iter().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneOutcome {
    pub best: Hyperparams,
    pub best_index: usize,
    /// Dev word-level F1 per grid point; empty when the grid has one point.
    pub dev_f1: Vec<f64>,
}

/// Grid search on word-level F1 of dev predictions against dev
/// majority-voted gold. Ties keep the earlier grid point.
pub fn tune(
    train_split: &Corpus,
    dev_split: &Corpus,
    grid: &[Hyperparams],
    mode: TrainingMode,
    config: &CrfConfig,
    seed: u64,
) -> Result<TuneOutcome, TaggerError> {
    match grid {
        [] => Err(TaggerError::EmptyGrid),
        [only] => {
            only.validate()?;
            Ok(TuneOutcome {
                best: *only,
                best_index: 0,
                dev_f1: Vec::new(),
            })
        }
        _ => {
            let dev_f1 = grid
                .par_iter()
                .map(|hp| {
                    let model = train(train_split, mode, hp, config, seed)?;
                    let preds = predict_corpus(&model, dev_split)?;
                    let report = evaluate_corpus(&preds, dev_split, Level::Word)
                        .map_err(|e| TaggerError::Data(e.to_string()))?;
                    Ok(report.scores.f1)
                })
                .collect::<Result<Vec<f64>, TaggerError>>()?;
            let mut best_index = 0;
            for (i, &f1) in dev_f1.iter().enumerate() {
                if f1 > dev_f1[best_index] {
                    best_index = i;
                }
            }
            Ok(TuneOutcome {
                best: grid[best_index],
                best_index,
                dev_f1,
            })
        }
    }
}

/// Tags each word Start / Continue / Outside uniformly at random and decodes.
pub fn random_tagger<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpanSet {
    let tags: Vec<Tag3> = (0..n).map(|_| Tag3::ALL[rng.random_range(0..3)]).collect();
    decode_start_continue(&tags)
}

/// Random-baseline predictions for every input, drawn in corpus order.
pub fn random_baseline(corpus: &Corpus, seed: u64) -> Predictions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus
        .iter()
        .map(|input| (input.key(), random_tagger(input.n(), &mut rng)))
        .collect()
}

/// Tag rendering of a model's Viterbi path, for debugging.
pub fn best_tags(model: &CrfModel, input: &LabeledInput<'_>) -> Result<Vec<Tag5>, TaggerError> {
    let feats = extract_features(input, model.hash_bits());
    Ok(viterbi(&log_potentials(model, &feats)?, model.constrained()).into_inner())
}
