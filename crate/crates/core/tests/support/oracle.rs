//! Independent reference computations for the CRF: exhaustive enumeration
//! of tag sequences and central finite differences. Nothing here calls the
//! forward-backward or Viterbi code it is used to check.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Normal};
use spanlab_core::corpus::SpanSet;
use spanlab_core::tagger::{loss_and_gradient, template_version, CrfModel, FeatureSequence, Potentials};
use spanlab_core::tags::{encode_spans, Tag5, TagSequence};

/// Admissible under the span-decoding rules: Inside/End only continue an
/// open span; a sequence cannot end inside an open span.
pub fn admissible(tags: &[Tag5]) -> bool {
    let mut open = false;
    for &t in tags {
        match t {
            Tag5::Inside | Tag5::End if !open => return false,
            Tag5::Singleton | Tag5::Begin | Tag5::Outside if open => return false,
            Tag5::Begin | Tag5::Inside => open = true,
            _ => open = false,
        }
    }
    !open
}

/// All 5^n tag sequences.
pub fn all_sequences(n: usize) -> Vec<Vec<Tag5>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                Tag5::ALL.into_iter().map(move |t| {
                    let mut p = prefix.clone();
                    p.push(t);
                    p
                })
            })
            .collect();
    }
    out
}

/// Direct sum of potentials along one sequence.
pub fn score(p: &Potentials, tags: &[Tag5]) -> f64 {
    let mut s = p.start[tags[0] as usize] + p.end[tags[tags.len() - 1] as usize];
    for (i, &t) in tags.iter().enumerate() {
        s += p.emissions[i][t as usize];
        if i > 0 {
            s += p.transitions[tags[i - 1] as usize][t as usize];
        }
    }
    s
}

pub fn brute_log_z(p: &Potentials, constrained: bool) -> f64 {
    let scores: Vec<f64> = all_sequences(p.emissions.len())
        .iter()
        .filter(|t| !constrained || admissible(t))
        .map(|t| score(p, t))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub fn brute_max(p: &Potentials, constrained: bool) -> f64 {
    all_sequences(p.emissions.len())
        .iter()
        .filter(|t| !constrained || admissible(t))
        .map(|t| score(p, t))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn brute_marginals(p: &Potentials, constrained: bool) -> Vec<[f64; 5]> {
    let n = p.emissions.len();
    let log_z = brute_log_z(p, constrained);
    let mut m = vec![[0.0; 5]; n];
    for t in all_sequences(n).iter().filter(|t| !constrained || admissible(t)) {
        let prob = (score(p, t) - log_z).exp();
        for (i, &tag) in t.iter().enumerate() {
            m[i][tag as usize] += prob;
        }
    }
    m
}

pub fn random_potentials<R: Rng>(rng: &mut R, n: usize, range: f64) -> Potentials {
    let mut u = || rng.random_range(-range..range);
    Potentials {
        emissions: (0..n).map(|_| std::array::from_fn(|_| u())).collect(),
        transitions: std::array::from_fn(|_| std::array::from_fn(|_| u())),
        start: std::array::from_fn(|_| u()),
        end: std::array::from_fn(|_| u()),
    }
}

pub fn random_span_set<R: Rng>(rng: &mut R, n: usize) -> SpanSet {
    let mut pairs = Vec::new();
    let mut pos = 1;
    while pos <= n {
        if rng.random_bool(0.4) {
            let len = rng.random_range(1..=(n - pos + 1).min(4));
            pairs.push((pos, pos + len - 1));
            pos += len;
        }
        pos += rng.random_range(0..3);
    }
    SpanSet::from_pairs(pairs).unwrap()
}

/// A small random model and example. Gold tags are admissible when the
/// model is constrained.
pub fn random_case<R: Rng>(rng: &mut R, hash_bits: u32) -> (CrfModel, FeatureSequence, TagSequence, f64) {
    let constrained = rng.random_bool(0.5);
    let mut model = CrfModel::zeros(hash_bits, constrained);
    let normal = Normal::new(0.0, 0.7).unwrap();
    for w in model.weights_mut() {
        if rng.random_bool(0.7) {
            *w = normal.sample(rng);
        }
    }
    let n = rng.random_range(1..=6);
    let buckets = 1u32 << hash_bits;
    let positions = (0..n)
        .map(|_| {
            let k = rng.random_range(1..=4);
            (0..k).map(|_| rng.random_range(0..buckets)).collect()
        })
        .collect();
    let feats = FeatureSequence {
        template: template_version(hash_bits),
        positions,
    };
    let gold = if constrained {
        encode_spans(&random_span_set(rng, n), n).unwrap()
    } else {
        TagSequence::new((0..n).map(|_| Tag5::ALL[rng.random_range(0..5)]).collect())
    };
    let l2 = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.1) };
    (model, feats, gold, l2)
}

/// Central finite-difference gradient of the loss over every parameter.
pub fn finite_difference(
    model: &CrfModel,
    feats: &FeatureSequence,
    gold: &TagSequence,
    l2: f64,
    eps: f64,
) -> Vec<f64> {
    let mut m = model.clone();
    (0..model.weights().len())
        .map(|i| {
            let w = m.weights()[i];
            m.weights_mut()[i] = w + eps;
            let up = loss_and_gradient(&m, feats, gold, l2).unwrap().0;
            m.weights_mut()[i] = w - eps;
            let down = loss_and_gradient(&m, feats, gold, l2).unwrap().0;
            m.weights_mut()[i] = w;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Relative error between the analytic and numeric gradients:
/// ‖a − n‖ / max(‖a‖, ‖n‖, 1e-12).
pub fn gradient_relative_error(model: &CrfModel, feats: &FeatureSequence, gold: &TagSequence, l2: f64) -> f64 {
    let (_, grad) = loss_and_gradient(model, feats, gold, l2).unwrap();
    let numeric = finite_difference(model, feats, gold, l2, 1e-5);
    let mut analytic = vec![0.0; numeric.len()];
    for (i, g) in grad {
        analytic[i] = g;
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12)
}
