use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Document-level k-fold plan. Every doc_id lands in exactly one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub dev_fraction: f64,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// (train, dev, test) sub-corpora of `corpus` for fold `f`.
    pub fn split(&self, corpus: &Corpus, f: usize) -> (Corpus, Corpus, Corpus) {
        let fold = &self.folds[f];
        let role: HashMap<&str, u8> = fold
            .train
            .iter()
            .map(|d| (d.as_str(), 0))
            .chain(fold.dev.iter().map(|d| (d.as_str(), 1)))
            .chain(fold.test.iter().map(|d| (d.as_str(), 2)))
            .collect();
        let part = |r: u8| corpus.filter_docs(|d| role.get(d) == Some(&r));
        (part(0), part(1), part(2))
    }
}

/// Shuffles doc_ids with a seeded RNG, cuts them into `k` near-equal test
/// sets, and draws `round(dev_fraction * |rest|)` dev documents per fold.
/// Sets are listed in corpus order.
pub fn split_folds(
    corpus: &Corpus,
    k: usize,
    dev_fraction: f64,
    seed: u64,
) -> Result<FoldPlan, CorpusError> {
    let ids = corpus.doc_ids();
    if k == 0 || k > ids.len() {
        return Err(CorpusError::Folds(format!(
            "k={k} but the corpus has {} documents",
            ids.len()
        )));
    }
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(CorpusError::Folds(format!(
            "dev fraction {dev_fraction} not in (0,1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng);

    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test: Vec<usize> = order[start..start + size].to_vec();
        let mut rest: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        start += size;

        rest.shuffle(&mut rng);
        let n_dev = (dev_fraction * rest.len() as f64).round() as usize;
        let mut dev = rest[..n_dev].to_vec();
        let mut train = rest[n_dev..].to_vec();
        let names = |v: &mut Vec<usize>| {
            v.sort_unstable();
            v.iter().map(|&i| ids[i].to_owned()).collect::<Vec<_>>()
        };
        folds.push(Fold {
            train: names(&mut train),
            dev: names(&mut dev),
            test: names(&mut test),
        });
    }
    Ok(FoldPlan {
        k,
        dev_fraction,
        seed,
        folds,
    })
}
