//! Linear-chain CRF over the five span tags.
//!
//! A tag sequence `y` for words `x` under label `l` scores
//! `f(x, y, l) = Σ_i emit[i][y_i] + start[y_1] + Σ_i trans[y_i][y_{i+1}] + end[y_N]`
//! and has probability `exp f / Z`. Constrained inference only sums over
//! (or maximizes over) sequences admitted by [`transition_mask`].

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

use super::features::{template_version, FeatureSequence};
use super::TaggerError;
use crate::tags::{transition_mask, Tag5, TagSequence};

const T: usize = Tag5::COUNT;
/// transitions + start + end
const STRUCT_PARAMS: usize = T * T + 2 * T;

/// Feature weights (one per hashed feature and tag) followed by transition,
/// start and end weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfModel {
    pub(crate) template: String,
    pub(crate) hash_bits: u32,
    pub(crate) constrained: bool,
    pub(crate) weights: Vec<f64>,
}

impl CrfModel {
    pub fn zeros(hash_bits: u32, constrained: bool) -> Self {
        CrfModel {
            template: template_version(hash_bits),
            hash_bits,
            constrained,
            weights: vec![0.0; param_count(hash_bits)],
        }
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn constrained(&self) -> bool {
        self.constrained
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn feature_index(&self, feature: u32, tag: Tag5) -> usize {
        feature as usize * T + tag.index()
    }

    pub fn transition_index(&self, from: Tag5, to: Tag5) -> usize {
        (1usize << self.hash_bits) * T + from.index() * T + to.index()
    }

    pub fn start_index(&self, tag: Tag5) -> usize {
        (1usize << self.hash_bits) * T + T * T + tag.index()
    }

    pub fn end_index(&self, tag: Tag5) -> usize {
        (1usize << self.hash_bits) * T + T * T + T + tag.index()
    }

    fn check_template(&self, feats: &FeatureSequence) -> Result<(), TaggerError> {
        if feats.template != self.template {
            return Err(TaggerError::TemplateMismatch {
                model: self.template.clone(),
                features: feats.template.clone(),
            });
        }
        Ok(())
    }
}

pub(crate) fn param_count(hash_bits: u32) -> usize {
    (1usize << hash_bits) * T + STRUCT_PARAMS
}

/// Emission scores per word plus the tag-transition tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Potentials {
    pub emissions: Vec<[f64; T]>,
    pub transitions: [[f64; T]; T],
    pub start: [f64; T],
    pub end: [f64; T],
}

impl Potentials {
    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    /// Unnormalized score of one tag sequence.
    pub fn score(&self, tags: &[Tag5]) -> f64 {
        let mut s = 0.0;
        for (i, t) in tags.iter().enumerate() {
            s += self.emissions[i][t.index()];
            if i == 0 {
                s += self.start[t.index()];
            } else {
                s += self.transitions[tags[i - 1].index()][t.index()];
            }
        }
        if let Some(last) = tags.last() {
            s += self.end[last.index()];
        }
        s
    }

    /// Transition tables with inadmissible entries set to -inf.
    fn masked(&self, constrained: bool) -> ([[f64; T]; T], [f64; T], [f64; T]) {
        let (mut trans, mut start, mut end) = (self.transitions, self.start, self.end);
        if constrained {
            let mask = transition_mask();
            for a in 0..T {
                for b in 0..T {
                    if !mask.allowed[a][b] {
                        trans[a][b] = f64::NEG_INFINITY;
                    }
                }
                if !mask.start[a] {
                    start[a] = f64::NEG_INFINITY;
                }
                if !mask.end[a] {
                    end[a] = f64::NEG_INFINITY;
                }
            }
        }
        (trans, start, end)
    }
}

/// `w = scale * weights`; the trainer keeps an implicit scale for L2 decay.
pub(crate) fn potentials_scaled(
    weights: &[f64],
    scale: f64,
    hash_bits: u32,
    feats: &FeatureSequence,
) -> Potentials {
    let base = (1usize << hash_bits) * T;
    let emissions = feats
        .positions
        .iter()
        .map(|active| {
            let mut e = [0.0; T];
            for &f in active {
                let w = &weights[f as usize * T..f as usize * T + T];
                for t in 0..T {
                    e[t] += w[t];
                }
            }
            e.map(|x| x * scale)
        })
        .collect();
    let mut transitions = [[0.0; T]; T];
    for (a, row) in transitions.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = scale * weights[base + a * T + b];
        }
    }
    let start = std::array::from_fn(|t| scale * weights[base + T * T + t]);
    let end = std::array::from_fn(|t| scale * weights[base + T * T + T + t]);
    Potentials {
        emissions,
        transitions,
        start,
        end,
    }
}

pub fn log_potentials(model: &CrfModel, feats: &FeatureSequence) -> Result<Potentials, TaggerError> {
    model.check_template(feats)?;
    Ok(potentials_scaled(&model.weights, 1.0, model.hash_bits, feats))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward-backward lattice in log space.
#[derive(Clone, Debug)]
pub struct ForwardBackward {
    pub log_z: f64,
    alpha: Vec<[f64; T]>,
    beta: Vec<[f64; T]>,
    trans: [[f64; T]; T],
}

impl ForwardBackward {
    /// `P(y_i = t)` for every word.
    pub fn marginals(&self) -> Vec<[f64; T]> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| std::array::from_fn(|t| (a[t] + b[t] - self.log_z).exp()))
            .collect()
    }

    /// `P(y_i = a, y_{i+1} = b)` summed over all adjacent word pairs.
    fn expected_transitions(&self, p: &Potentials) -> [[f64; T]; T] {
        let mut out = [[0.0; T]; T];
        for i in 0..self.alpha.len().saturating_sub(1) {
            for a in 0..T {
                for b in 0..T {
                    let lp = self.alpha[i][a]
                        + self.trans[a][b]
                        + p.emissions[i + 1][b]
                        + self.beta[i + 1][b]
                        - self.log_z;
                    out[a][b] += lp.exp();
                }
            }
        }
        out
    }
}

pub fn forward_backward(p: &Potentials, constrained: bool) -> ForwardBackward {
    let n = p.len();
    assert!(n > 0, "forward-backward needs at least one word");
    let (trans, start, end) = p.masked(constrained);

    let mut alpha = vec![[f64::NEG_INFINITY; T]; n];
    for t in 0..T {
        alpha[0][t] = start[t] + p.emissions[0][t];
    }
    for i in 1..n {
        for t in 0..T {
            let prev = &alpha[i - 1];
            alpha[i][t] = p.emissions[i][t] + log_sum_exp((0..T).map(|a| prev[a] + trans[a][t]));
        }
    }
    let log_z = log_sum_exp((0..T).map(|t| alpha[n - 1][t] + end[t]));

    let mut beta = vec![[f64::NEG_INFINITY; T]; n];
    beta[n - 1] = end;
    for i in (0..n - 1).rev() {
        for a in 0..T {
            let next = &beta[i + 1];
            beta[i][a] =
                log_sum_exp((0..T).map(|b| trans[a][b] + p.emissions[i + 1][b] + next[b]));
        }
    }
    ForwardBackward {
        log_z,
        alpha,
        beta,
        trans,
    }
}

/// Log partition function and per-word tag marginals.
pub fn forward_log_z(p: &Potentials, constrained: bool) -> (f64, Vec<[f64; T]>) {
    let fb = forward_backward(p, constrained);
    (fb.log_z, fb.marginals())
}

/// Highest-scoring tag sequence. Among equal scores the sequence with the
/// lower tag index (S < B < E < I < O) at the latest differing word wins.
pub fn viterbi(p: &Potentials, constrained: bool) -> TagSequence {
    let n = p.len();
    assert!(n > 0, "viterbi needs at least one word");
    let (trans, start, end) = p.masked(constrained);

    let mut delta = vec![[f64::NEG_INFINITY; T]; n];
    let mut back = vec![[0usize; T]; n];
    for t in 0..T {
        delta[0][t] = start[t] + p.emissions[0][t];
    }
    for i in 1..n {
        for t in 0..T {
            let mut best = (f64::NEG_INFINITY, 0);
            for a in 0..T {
                let s = delta[i - 1][a] + trans[a][t];
                if s > best.0 {
                    best = (s, a);
                }
            }
            delta[i][t] = best.0 + p.emissions[i][t];
            back[i][t] = best.1;
        }
    }
    let mut last = (f64::NEG_INFINITY, 0);
    for t in 0..T {
        let s = delta[n - 1][t] + end[t];
        if s > last.0 {
            last = (s, t);
        }
    }
    let mut tags = vec![Tag5::Outside; n];
    let mut cur = last.1;
    for i in (0..n).rev() {
        tags[i] = Tag5::ALL[cur];
        cur = back[i][cur];
    }
    TagSequence::new(tags)
}

/// Dense gradient accumulator that remembers which entries were touched.
pub(crate) struct GradBuffer {
    pub(crate) values: Vec<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl GradBuffer {
    pub(crate) fn new(len: usize) -> Self {
        GradBuffer {
            values: vec![0.0; len],
            touched: Vec::new(),
            marked: vec![false; len],
        }
    }

    fn add(&mut self, idx: usize, v: f64) {
        if !self.marked[idx] {
            self.marked[idx] = true;
            self.touched.push(idx);
        }
        self.values[idx] += v;
    }

    /// Yields (index, value) for touched entries in ascending index order
    /// and resets the buffer.
    pub(crate) fn drain(&mut self) -> Vec<(usize, f64)> {
        self.touched.sort_unstable();
        let out = self
            .touched
            .iter()
            .map(|&i| (i, std::mem::take(&mut self.values[i])))
            .collect();
        for &i in &self.touched {
            self.marked[i] = false;
        }
        self.touched.clear();
        out
    }
}

/// Adds the data gradient (expected minus observed counts) of one example
/// into `grad` and returns its negative log-likelihood, without L2.
pub(crate) fn accumulate_example(
    weights: &[f64],
    scale: f64,
    hash_bits: u32,
    constrained: bool,
    feats: &FeatureSequence,
    gold: &[Tag5],
    grad: &mut GradBuffer,
) -> f64 {
    let p = potentials_scaled(weights, scale, hash_bits, feats);
    let fb = forward_backward(&p, constrained);
    let nll = fb.log_z - p.score(gold);
    let marg = fb.marginals();
    let base = (1usize << hash_bits) * T;

    for (i, active) in feats.positions.iter().enumerate() {
        let mut d = marg[i];
        d[gold[i].index()] -= 1.0;
        for &f in active {
            for (t, &dt) in d.iter().enumerate() {
                grad.add(f as usize * T + t, dt);
            }
        }
    }
    let pair = fb.expected_transitions(&p);
    for w in gold.windows(2) {
        grad.add(base + w[0].index() * T + w[1].index(), -1.0);
    }
    for (a, row) in pair.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            if v != 0.0 {
                grad.add(base + a * T + b, v);
            }
        }
    }
    let n = gold.len();
    for t in 0..T {
        grad.add(base + T * T + t, marg[0][t]);
        grad.add(base + T * T + T + t, marg[n - 1][t]);
    }
    grad.add(base + T * T + gold[0].index(), -1.0);
    grad.add(base + T * T + T + gold[n - 1].index(), -1.0);
    nll
}

/// Sparse gradient: every parameter not listed has zero gradient.
pub type Gradient = BTreeMap<usize, f64>;

/// Negative log-likelihood of `gold` plus `(l2/2)‖w‖²`, and its gradient.
pub fn loss_and_gradient(
    model: &CrfModel,
    feats: &FeatureSequence,
    gold: &TagSequence,
    l2: f64,
) -> Result<(f64, Gradient), TaggerError> {
    model.check_template(feats)?;
    if gold.len() != feats.len() {
        return Err(TaggerError::LengthMismatch {
            features: feats.len(),
            tags: gold.len(),
        });
    }
    let mut buf = GradBuffer::new(model.weights.len());
    let nll = accumulate_example(
        &model.weights,
        1.0,
        model.hash_bits,
        model.constrained,
        feats,
        gold,
        &mut buf,
    );
    let mut grad: Gradient = buf.drain().into_iter().collect();
    let mut sq = 0.0;
    if l2 > 0.0 {
        for (i, &w) in model.weights.iter().enumerate() {
            if w != 0.0 {
                sq += w * w;
                *grad.entry(i).or_insert(0.0) += l2 * w;
            }
        }
    }
    grad.retain(|_, g| *g != 0.0);
    Ok((nll + 0.5 * l2 * sq, grad))
}
