//! Cross-validated comparison of the random baseline, MV training and ReL
//! training under every evaluation setup.
//!
//! Per fold, models are trained on the train split only. Hyperparameters
//! are tuned on the dev split of fold 1 and reused for the other folds
//! unless `tune_every_fold` is set. Test-fold predictions from all folds are
//! pooled and scored once per run; the table reports mean and sample
//! standard deviation over seeds.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{split_folds, write_predictions, Corpus, CorpusError, FoldPlan, Predictions};
use crate::evaluate::{evaluate, expert_estimate, EvalError, GoldType, Level, Scores};
use crate::kv::{KvError, KvFile};
use crate::tagger::{
    predict_corpus, random_baseline, train, tune, CrfConfig, Hyperparams, TaggerError,
    TrainingMode, TuneOutcome, DEFAULT_HASH_BITS,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    Mv,
    Rel,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Mv => "mv",
            Method::Rel => "rel",
        }
    }

    fn display_name(self) -> &'static str {
        match self {
            Method::Random => "Random",
            Method::Mv => "MV",
            Method::Rel => "ReL",
        }
    }

    pub fn training_mode(self) -> Option<TrainingMode> {
        match self {
            Method::Random => None,
            Method::Mv => Some(TrainingMode::Mv),
            Method::Rel => Some(TrainingMode::Rel),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Method::Random),
            "mv" => Ok(Method::Mv),
            "rel" => Ok(Method::Rel),
            _ => Err(format!("unknown method {s:?} (expected random, mv or rel)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub corpus: PathBuf,
    pub k: usize,
    pub dev_fraction: f64,
    pub split_seed: u64,
    pub methods: Vec<Method>,
    pub levels: Vec<Level>,
    pub golds: Vec<GoldType>,
    pub seeds: Vec<u64>,
    pub grid: Vec<Hyperparams>,
    pub tune_every_fold: bool,
    pub crf: CrfConfig,
    /// Not part of the recorded configuration.
    #[serde(skip)]
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn new(corpus: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            corpus: corpus.into(),
            k: 20,
            dev_fraction: 0.1,
            split_seed: 0,
            methods: vec![Method::Random, Method::Mv, Method::Rel],
            levels: Level::ALL.to_vec(),
            golds: GoldType::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            grid: crate::tagger::default_grid(),
            tune_every_fold: false,
            crf: CrfConfig::default(),
            out: out.into(),
        }
    }

    /// Parses a flat key = value config. Relative paths resolve against
    /// `base_dir`.
    ///
    /// Keys: corpus, out, k, dev_fraction, split_seed, methods, levels,
    /// gold, seeds, learning_rates, batch_sizes, epochs, l2, hash_bits,
    /// constrained, tune_every_fold.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut kv = KvFile::parse(text)?;
        let corpus: PathBuf = kv.require::<String>("corpus")?.into();
        let out: PathBuf = kv.get_or::<String>("out", "results".into())?.into();
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let mut spec = ExperimentSpec::new(resolve(corpus), resolve(out));
        spec.k = kv.get_or("k", spec.k)?;
        spec.dev_fraction = kv.get_or("dev_fraction", spec.dev_fraction)?;
        spec.split_seed = kv.get_or("split_seed", spec.split_seed)?;
        if let Some(m) = kv.get_list("methods")? {
            spec.methods = m;
        }
        if let Some(l) = kv.get_list("levels")? {
            spec.levels = l;
        }
        if let Some(g) = kv.get_list("gold")? {
            spec.golds = g;
        }
        if let Some(s) = kv.get_list("seeds")? {
            spec.seeds = s;
        }
        let defaults = Hyperparams::default();
        let lrs: Vec<f64> = kv
            .get_list("learning_rates")?
            .unwrap_or_else(|| vec![0.01, 0.05, 0.1, 0.5]);
        let batches: Vec<usize> = kv.get_list("batch_sizes")?.unwrap_or_else(|| vec![1, 8, 32]);
        let epochs = kv.get_or("epochs", defaults.epochs)?;
        let l2 = kv.get_or("l2", defaults.l2)?;
        spec.grid = lrs
            .iter()
            .flat_map(|&learning_rate| {
                batches.iter().map(move |&batch_size| Hyperparams {
                    learning_rate,
                    batch_size,
                    epochs,
                    l2,
                })
            })
            .collect();
        spec.crf = CrfConfig {
            hash_bits: kv.get_or("hash_bits", DEFAULT_HASH_BITS)?,
            constrained: kv.get_or("constrained", true)?,
        };
        spec.tune_every_fold = kv.get_or("tune_every_fold", false)?;
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_owned()));
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        if self.methods.is_empty() || self.levels.is_empty() || self.golds.is_empty() {
            return bad("methods, levels and gold must be non-empty");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.grid.is_empty() {
            return bad("tuning grid is empty");
        }
        for hp in &self.grid {
            hp.validate()?;
        }
        Ok(())
    }
}

/// Sees every corpus handed to training or tuning.
pub trait Observer: Sync {
    fn training_data(&self, _fold: usize, _corpus: &Corpus) {}
}

struct NoObserver;
impl Observer for NoObserver {}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

impl Stat {
    fn of(runs: Vec<f64>) -> Stat {
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let std = if runs.len() > 1 {
            (runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std, runs }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: Method,
    pub gold_type: GoldType,
    pub level: Level,
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpertRow {
    pub level: Level,
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuningRecord {
    pub method: Method,
    pub fold: usize,
    pub outcome: TuneOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusInfo {
    pub inputs: usize,
    pub documents: usize,
    pub records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResults {
    pub config: ExperimentSpec,
    pub corpus: CorpusInfo,
    pub tuning: Vec<TuningRecord>,
    pub rows: Vec<ResultRow>,
    pub expert: Vec<ExpertRow>,
    /// Per fold, method and seed: the test-fold predictions.
    #[serde(skip)]
    pub fold_predictions: Vec<FoldPredictions>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldPredictions {
    pub fold: usize,
    pub method: Method,
    pub seed: u64,
    pub predictions: Predictions,
}

/// Seed for one (run seed, fold) job.
fn job_seed(seed: u64, fold: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(fold as u64 + 1);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn run_experiment(spec: &ExperimentSpec, corpus: &Corpus) -> Result<ExperimentResults, ExperimentError> {
    run_experiment_observed(spec, corpus, &NoObserver)
}

pub fn run_experiment_observed(
    spec: &ExperimentSpec,
    corpus: &Corpus,
    observer: &dyn Observer,
) -> Result<ExperimentResults, ExperimentError> {
    spec.validate()?;
    let plan: FoldPlan = split_folds(corpus, spec.k, spec.dev_fraction, spec.split_seed)?;
    let splits: Vec<(Corpus, Corpus, Corpus)> =
        (0..spec.k).map(|f| plan.split(corpus, f)).collect();

    // hyperparameters per (trained method, fold)
    let mut tuning = Vec::new();
    let mut chosen: Vec<(Method, Vec<Hyperparams>)> = Vec::new();
    for &method in &spec.methods {
        let Some(mode) = method.training_mode() else {
            continue;
        };
        let tune_folds: Vec<usize> = if spec.tune_every_fold {
            (0..spec.k).collect()
        } else {
            vec![0]
        };
        let outcomes = tune_folds
            .par_iter()
            .map(|&f| {
                let (train_split, dev_split, _) = &splits[f];
                observer.training_data(f, train_split);
                observer.training_data(f, dev_split);
                tune(train_split, dev_split, &spec.grid, mode, &spec.crf, spec.seeds[0])
                    .map(|o| (f, o))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let per_fold = (0..spec.k)
            .map(|f| {
                let i = if spec.tune_every_fold { f } else { 0 };
                outcomes[i].1.best
            })
            .collect();
        tuning.extend(outcomes.into_iter().map(|(fold, outcome)| TuningRecord {
            method,
            fold,
            outcome,
        }));
        chosen.push((method, per_fold));
    }

    let jobs: Vec<(Method, u64, usize)> = spec
        .methods
        .iter()
        .flat_map(|&m| {
            spec.seeds
                .iter()
                .flat_map(move |&s| (0..spec.k).map(move |f| (m, s, f)))
        })
        .collect();
    let fold_predictions = jobs
        .par_iter()
        .map(|&(method, seed, fold)| {
            let (train_split, _, test_split) = &splits[fold];
            let predictions = match method.training_mode() {
                None => random_baseline(test_split, job_seed(seed, fold)),
                Some(mode) => {
                    let hp = &chosen.iter().find(|(m, _)| *m == method).expect("tuned").1[fold];
                    observer.training_data(fold, train_split);
                    let model = train(train_split, mode, hp, &spec.crf, job_seed(seed, fold))?;
                    predict_corpus(&model, test_split)?
                }
            };
            Ok(FoldPredictions {
                fold,
                method,
                seed,
                predictions,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let mut rows = Vec::new();
    for &method in &spec.methods {
        let pooled: Vec<Predictions> = spec
            .seeds
            .iter()
            .map(|&seed| {
                fold_predictions
                    .iter()
                    .filter(|p| p.method == method && p.seed == seed)
                    .flat_map(|p| p.predictions.clone())
                    .collect()
            })
            .collect();
        for &gold_type in &spec.golds {
            for &level in &spec.levels {
                let scores = pooled
                    .iter()
                    .map(|preds| evaluate(preds, corpus, level, gold_type).map(|r| r.scores))
                    .collect::<Result<Vec<_>, _>>()?;
                rows.push(ResultRow {
                    method,
                    gold_type,
                    level,
                    precision: Stat::of(scores.iter().map(|s| s.precision).collect()),
                    recall: Stat::of(scores.iter().map(|s| s.recall).collect()),
                    f1: Stat::of(scores.iter().map(|s| s.f1).collect()),
                });
            }
        }
    }

    let expert = if spec.golds.contains(&GoldType::Majority) {
        spec.levels
            .iter()
            .map(|&level| {
                Ok(ExpertRow {
                    level,
                    scores: expert_estimate(corpus, level)?.scores,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?
    } else {
        Vec::new()
    };

    Ok(ExperimentResults {
        config: spec.clone(),
        corpus: CorpusInfo {
            inputs: corpus.len(),
            documents: corpus.doc_ids().len(),
            records: corpus.total_records(),
        },
        tuning,
        rows,
        expert,
        fold_predictions,
    })
}

impl ExperimentResults {
    pub fn row(&self, method: Method, gold: GoldType, level: Level) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.gold_type == gold && r.level == level)
    }

    /// Percent tables, one per gold type, methods as rows and span/word
    /// P/R/F1 as columns. `mean(std)` to one decimal.
    pub fn render_table(&self) -> String {
        let pct = |s: &Stat| format!("{:.1}({:.1})", 100.0 * s.mean, 100.0 * s.std);
        let mut out = String::new();
        for &gold in &self.config.golds {
            let title = match gold {
                GoldType::Majority => "Majority-voted gold spans",
                GoldType::BestMatched => "Best-matched gold spans",
            };
            let _ = writeln!(out, "{title}");
            let mut header = format!("{:<8}", "Method");
            for level in &self.config.levels {
                for m in ["P", "R", "F1"] {
                    let name = format!("{}-{m}", if *level == Level::Span { "Span" } else { "Word" });
                    let _ = write!(header, " {name:>12}");
                }
            }
            let _ = writeln!(out, "{header}");
            for &method in &self.config.methods {
                let mut line = format!("{:<8}", method.display_name());
                for &level in &self.config.levels {
                    if let Some(r) = self.row(method, gold, level) {
                        for s in [&r.precision, &r.recall, &r.f1] {
                            let _ = write!(line, " {:>12}", pct(s));
                        }
                    }
                }
                let _ = writeln!(out, "{line}");
            }
            if gold == GoldType::Majority && !self.expert.is_empty() {
                let mut line = format!("{:<8}", "Expert");
                for &level in &self.config.levels {
                    if let Some(e) = self.expert.iter().find(|e| e.level == level) {
                        for x in [e.scores.precision, e.scores.recall, e.scores.f1] {
                            let _ = write!(line, " {:>12}", format!("{:.1}", 100.0 * x));
                        }
                    }
                }
                let _ = writeln!(out, "{line}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "Mean (sample std) over seeds {:?}; {} folds; {} inputs.",
            self.config.seeds, self.config.k, self.corpus.inputs
        );
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    /// Writes results.json, results.txt and predictions/fold<F>_<method>_seed<S>.jsonl.
    pub fn write(&self, out: &Path) -> Result<(), ExperimentError> {
        let pred_dir = out.join("predictions");
        fs::create_dir_all(&pred_dir).map_err(io_err(&pred_dir))?;
        let json = out.join("results.json");
        fs::write(&json, self.to_json()).map_err(io_err(&json))?;
        let txt = out.join("results.txt");
        fs::write(&txt, self.render_table()).map_err(io_err(&txt))?;
        for p in &self.fold_predictions {
            let path = pred_dir.join(format!(
                "fold{:02}_{}_seed{}.jsonl",
                p.fold + 1,
                p.method.as_str(),
                p.seed
            ));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            write_predictions(&p.predictions, BufWriter::new(file))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;
    use std::sync::Mutex;

    use super::*;
    use crate::synth::{generate, NoiseModel, SynthConfig};

    fn small_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::new("corpus.jsonl", "out");
        spec.k = 3;
        spec.seeds = vec![1, 2];
        spec.grid = vec![
            Hyperparams { learning_rate: 0.05, batch_size: 4, epochs: 2, l2: 1e-4 },
            Hyperparams { learning_rate: 0.2, batch_size: 4, epochs: 2, l2: 1e-4 },
        ];
        spec.crf.hash_bits = 14;
        spec
    }

    fn small_corpus() -> Corpus {
        let config = SynthConfig { n_docs: 30, seed: 4, ..SynthConfig::default() };
        generate(&config, &NoiseModel::default()).unwrap().0
    }

    #[test]
    fn parses_config() {
        let text = "corpus = data/c.jsonl\nk = 5\nmethods = mv, rel\nseeds = 7\n\
                    learning_rates = 0.1\nbatch_sizes = 1, 8\nepochs = 3\nconstrained = false\n";
        let spec = ExperimentSpec::parse(text, Path::new("/base")).unwrap();
        assert_eq!(spec.corpus, PathBuf::from("/base/data/c.jsonl"));
        assert_eq!(spec.out, PathBuf::from("/base/results"));
        assert_eq!(spec.k, 5);
        assert_eq!(spec.methods, vec![Method::Mv, Method::Rel]);
        assert_eq!(spec.seeds, vec![7]);
        assert_eq!(spec.grid.len(), 2);
        assert_eq!(spec.grid[1].batch_size, 8);
        assert_eq!(spec.grid[1].epochs, 3);
        assert!(!spec.crf.constrained);
        assert!(ExperimentSpec::parse("corpus = x\nk = 1", Path::new(".")).is_err());
        assert!(ExperimentSpec::parse("corpus = x\nfolds = 3", Path::new(".")).is_err());
        assert!(ExperimentSpec::parse("k = 3", Path::new(".")).is_err());
    }

    #[test]
    fn stat_uses_sample_std() {
        let s = Stat::of(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of(vec![0.5]).std, 0.0);
    }

    struct Recorder(Mutex<Vec<(usize, Vec<String>)>>);

    impl Observer for Recorder {
        fn training_data(&self, fold: usize, corpus: &Corpus) {
            let ids = corpus.doc_ids().into_iter().map(str::to_owned).collect();
            self.0.lock().unwrap().push((fold, ids));
        }
    }

    #[test]
    fn never_trains_on_test_documents() {
        let corpus = small_corpus();
        let mut spec = small_spec();
        spec.tune_every_fold = true;
        let rec = Recorder(Mutex::new(Vec::new()));
        run_experiment_observed(&spec, &corpus, &rec).unwrap();
        let plan = split_folds(&corpus, spec.k, spec.dev_fraction, spec.split_seed).unwrap();
        let seen = rec.0.into_inner().unwrap();
        assert!(!seen.is_empty());
        for (fold, ids) in seen {
            let test: HashSet<&String> = plan.folds[fold].test.iter().collect();
            assert!(ids.iter().all(|d| !test.contains(d)), "fold {fold} leaked");
        }
    }

    #[test]
    fn full_table_and_predictions() {
        let corpus = small_corpus();
        let spec = small_spec();
        let res = run_experiment(&spec, &corpus).unwrap();
        assert_eq!(res.rows.len(), 3 * 2 * 2);
        assert_eq!(res.expert.len(), 2);
        assert_eq!(res.tuning.len(), 2);
        assert_eq!(res.fold_predictions.len(), 3 * 2 * 3);
        for p in &res.fold_predictions {
            assert!(!p.predictions.is_empty());
        }
        let table = res.render_table();
        assert!(table.contains("Majority-voted gold spans"));
        assert!(table.contains("Best-matched gold spans"));
        for name in ["Random", "MV", "ReL", "Expert", "Span-F1", "Word-R"] {
            assert!(table.contains(name), "{name} missing:\n{table}");
        }
        let again = run_experiment(&spec, &corpus).unwrap();
        assert_eq!(res.to_json(), again.to_json());

        let dir = tempfile::tempdir().unwrap();
        res.write(dir.path()).unwrap();
        assert!(dir.path().join("results.json").exists());
        assert!(dir.path().join("results.txt").exists());
        assert!(dir.path().join("predictions/fold01_mv_seed1.jsonl").exists());
    }
}
