use std::sync::Arc;

use proptest::prelude::*;
use spanlab_core::aggregate::{majority_vote_sets, vote_counts};
use spanlab_core::corpus::{
    parse_corpus, split_folds, write_corpus, AnnotationRecord, Corpus, Document, InputAnnotations,
    Predictions, SpanSet,
};
use spanlab_core::evaluate::{
    best_match_select, evaluate_best_matched, evaluate_corpus, expert_estimate, match_counts, prf,
    Level, MatchCounts,
};
use spanlab_core::tags::{
    decode_start_continue, decode_tags, encode_spans, transition_mask, Tag3, Tag5,
};

fn tags(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Tag5>> {
    prop::collection::vec((0..5usize).prop_map(|i| Tag5::ALL[i]), n)
}

/// Arbitrary span sets over `n` words, adjacent spans included.
fn span_set(n: usize) -> impl Strategy<Value = SpanSet> {
    prop::collection::vec((0..5usize).prop_map(|i| Tag5::ALL[i]), n).prop_map(|t| decode_tags(&t))
}

fn profile() -> impl Strategy<Value = (usize, Vec<SpanSet>)> {
    (1..25usize, 1..8usize).prop_flat_map(|(n, a)| (Just(n), prop::collection::vec(span_set(n), a)))
}

fn level() -> impl Strategy<Value = Level> {
    prop_oneof![Just(Level::Span), Just(Level::Word)]
}

fn small_corpus() -> impl Strategy<Value = Corpus> {
    let input = (1..15usize).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(span_set(n), 1..5),
            prop::collection::vec(0..3usize, 1..3),
        )
    });
    prop::collection::vec(input, 1..6).prop_map(|docs| {
        let mut inputs = Vec::new();
        for (d, (n, sets, labels)) in docs.into_iter().enumerate() {
            let document = Arc::new(Document {
                doc_id: format!("d{d}"),
                words: (0..n).map(|i| format!("w{}", (i * 7 + d) % 11)).collect(),
            });
            let mut labels = labels;
            labels.sort();
            labels.dedup();
            for l in labels {
                inputs.push(InputAnnotations {
                    document: document.clone(),
                    label: format!("L{l}"),
                    records: sets
                        .iter()
                        .enumerate()
                        .map(|(a, s)| AnnotationRecord {
                            annotator_id: format!("a{a}"),
                            spans: s.clone(),
                        })
                        .collect(),
                });
            }
        }
        Corpus::new(inputs).unwrap()
    })
}

proptest! {
    #[test]
    fn encode_decode_round_trip(n in 1..40usize, seed in any::<Vec<usize>>()) {
        let t: Vec<Tag5> = (0..n).map(|i| Tag5::ALL[seed.get(i).copied().unwrap_or(4) % 5]).collect();
        let spans = decode_tags(&t);
        let encoded = encode_spans(&spans, n).unwrap();
        prop_assert_eq!(decode_tags(&encoded), spans);
    }

    #[test]
    fn repaired_decoding_is_admissible(t in tags(1..40)) {
        let n = t.len();
        let spans = decode_tags(&t);
        prop_assert!(spans.check_bounds(n).is_ok());
        let encoded = encode_spans(&spans, n).unwrap();
        prop_assert!(transition_mask().admits(&encoded));
        if transition_mask().admits(&t) {
            prop_assert_eq!(&encoded[..], &t[..]);
        }
    }

    #[test]
    fn start_continue_membership(t in prop::collection::vec((0..3usize).prop_map(|i| Tag3::ALL[i]), 1..40)) {
        let spans = decode_start_continue(&t);
        for (i, &tag) in t.iter().enumerate() {
            prop_assert_eq!(spans.contains_word(i + 1), tag != Tag3::Outside);
        }
    }

    #[test]
    fn majority_threshold((n, sets) in profile()) {
        let mv = majority_vote_sets(&sets, n).unwrap();
        let a = sets.len();
        for w in 1..=n {
            let c = sets.iter().filter(|s| s.contains_word(w)).count();
            prop_assert_eq!(mv.contains_word(w), 2 * c > a);
        }
        // maximal runs: no two output spans touch
        for pair in mv.spans().windows(2) {
            prop_assert!(pair[1].begin > pair[0].end + 1);
        }
    }

    #[test]
    fn majority_permutation_invariant((n, mut sets) in profile(), rot in 0..8usize) {
        let before = majority_vote_sets(&sets, n).unwrap();
        let len = sets.len();
        sets.rotate_left(rot % len);
        sets.reverse();
        prop_assert_eq!(majority_vote_sets(&sets, n).unwrap(), before);
    }

    #[test]
    fn majority_monotone((n, mut sets) in profile(), pick in 0..8usize, extra in 1..25usize) {
        let before = majority_vote_sets(&sets, n).unwrap();
        let i = pick % sets.len();
        let w = 1 + extra % n;
        let mut mask: Vec<bool> = (1..=n).map(|x| sets[i].contains_word(x)).collect();
        mask[w - 1] = true;
        sets[i] = SpanSet::from_word_mask(&mask);
        let after = majority_vote_sets(&sets, n).unwrap();
        for x in before.words() {
            prop_assert!(after.contains_word(x));
        }
    }

    #[test]
    fn unanimity_recovers_coverage(n in 1..25usize, s in span_set(24), copies in 1..6usize) {
        let s = SpanSet::from_pairs(s.to_pairs().into_iter().filter(|&(_, e)| e <= n)).unwrap();
        let sets = vec![s.clone(); copies];
        let mv = majority_vote_sets(&sets, n).unwrap();
        let words: Vec<usize> = s.words().collect();
        prop_assert_eq!(mv.words().collect::<Vec<_>>(), words);
        let profile = vote_counts(&sets, n).unwrap();
        prop_assert_eq!(profile.total, copies);
    }

    #[test]
    fn match_counts_bounds(n in 1..30usize, seed in 0..1000u64, lvl in level()) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let t1: Vec<Tag5> = (0..n).map(|_| Tag5::ALL[rand::Rng::random_range(&mut rng, 0..5)]).collect();
        let t2: Vec<Tag5> = (0..n).map(|_| Tag5::ALL[rand::Rng::random_range(&mut rng, 0..5)]).collect();
        let (p, g) = (decode_tags(&t1), decode_tags(&t2));
        let c = match_counts(&p, &g, lvl);
        prop_assert!(c.matched <= c.predicted.min(c.gold));
        let swapped = match_counts(&g, &p, lvl);
        prop_assert_eq!(swapped, MatchCounts::new(c.matched, c.gold, c.predicted));
        let self_match = match_counts(&p, &p, lvl);
        prop_assert_eq!(prf(self_match).f1, 1.0);
        let s = prf(c);
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn micro_average_is_pooled_counts(corpus in small_corpus(), lvl in level(), seed in 0..100u64) {
        let preds = spanlab_core::tagger::random_baseline(&corpus, seed);
        let report = evaluate_corpus(&preds, &corpus, lvl).unwrap();
        let sum: MatchCounts = report.per_input.iter().map(|s| s.counts).sum();
        prop_assert_eq!(report.counts, sum);
        prop_assert_eq!(report.scores, prf(sum));
        prop_assert_eq!(report.per_input.len(), corpus.len());
    }

    #[test]
    fn best_match_is_argmax(corpus in small_corpus(), lvl in level(), seed in 0..100u64) {
        let preds = spanlab_core::tagger::random_baseline(&corpus, seed);
        for input in corpus.iter() {
            let pred = &preds[&input.key()];
            let (id, counts) = best_match_select(pred, &input.records, lvl);
            let best = prf(counts).f1;
            for r in &input.records {
                let f1 = prf(match_counts(pred, &r.spans, lvl)).f1;
                prop_assert!(f1 <= best);
                if f1 == best {
                    prop_assert!(id <= r.annotator_id.as_str());
                }
            }
        }
        let report = evaluate_best_matched(&preds, &corpus, lvl).unwrap();
        prop_assert!(report.per_input.iter().all(|s| s.annotator_id.is_some()));
    }

    #[test]
    fn expert_dominates_each_annotator_per_input(corpus in small_corpus(), lvl in level()) {
        let expert = expert_estimate(&corpus, lvl).unwrap();
        for (input, score) in corpus.iter().zip(&expert.per_input) {
            let gold = spanlab_core::aggregate::majority_vote(&input.records, input.n()).unwrap();
            let best = prf(score.counts).f1;
            for r in &input.records {
                prop_assert!(prf(match_counts(&r.spans, &gold, lvl)).f1 <= best);
            }
        }
    }

    #[test]
    fn corpus_round_trips_through_jsonl(corpus in small_corpus()) {
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let back = parse_corpus(&buf[..]).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn predictions_round_trip(corpus in small_corpus(), seed in 0..100u64) {
        let preds = spanlab_core::tagger::random_baseline(&corpus, seed);
        let mut buf = Vec::new();
        spanlab_core::corpus::write_predictions(preds.iter(), &mut buf).unwrap();
        let back: Predictions = spanlab_core::corpus::read_predictions(&buf[..]).unwrap();
        prop_assert_eq!(back, preds);
    }

    #[test]
    fn folds_partition_documents(corpus in small_corpus(), k in 1..6usize, seed in any::<u64>()) {
        let docs = corpus.doc_ids().len();
        prop_assume!(k <= docs);
        let plan = split_folds(&corpus, k, 0.2, seed).unwrap();
        let mut tested: Vec<String> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        tested.sort();
        let mut all: Vec<String> = corpus.doc_ids().iter().map(|s| s.to_string()).collect();
        all.sort();
        prop_assert_eq!(tested, all);
        for f in &plan.folds {
            prop_assert_eq!(f.train.len() + f.dev.len() + f.test.len(), docs);
            for d in &f.dev {
                prop_assert!(!f.test.contains(d) && !f.train.contains(d));
            }
        }
    }
}
