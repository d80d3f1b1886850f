use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use spanlab_core::aggregate::majority_vote;
use spanlab_core::corpus::{
    parse_corpus, read_predictions, read_raw, split_folds, validate_raw, write_corpus,
    write_predictions, Corpus, Policy, Predictions,
};
use spanlab_core::evaluate::{evaluate, expert_estimate, GoldType, Level};
use spanlab_core::experiment::{run_experiment, ExperimentSpec};
use spanlab_core::synth::{generate, parse_synth_config};
use spanlab_core::tagger::{
    default_grid, predict_corpus, random_baseline, read_model, train, tune, write_model,
    CrfConfig, Hyperparams, TrainingMode, DEFAULT_HASH_BITS,
};

#[derive(Parser)]
#[command(name = "spanlab", version, about = "Span prediction from multiply-annotated corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-annotator corpus and its true spans.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a corpus and list every violation.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::AnnotatorInput)]
        policy: PolicyArg,
    },
    /// Document-level k-fold split with a dev subset per fold.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Majority-voted spans of every input.
    Aggregate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random Start/Continue/Outside predictions.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a CRF tagger.
    Train(TrainArgs),
    /// Tag a corpus with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against majority or best-matched gold.
    Evaluate {
        #[arg(long, value_enum)]
        level: LevelArg,
        #[arg(long, value_enum)]
        gold: GoldArg,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        per_input: bool,
    },
    /// Best single annotator against majority gold.
    Expert {
        #[arg(long)]
        corpus: PathBuf,
        /// Both levels when omitted.
        #[arg(long, value_enum)]
        level: Option<LevelArg>,
    },
    /// Full cross-validated comparison from a key = value config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out` in the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    corpus: PathBuf,
    /// Dev corpus, required by --tune.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, conflicts_with = "tune")]
    lr: Option<f64>,
    #[arg(long, conflicts_with = "tune")]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid search over learning rate and batch size on --dev.
    #[arg(long, requires = "dev")]
    tune: bool,
    #[arg(long, default_value_t = DEFAULT_HASH_BITS)]
    hash_bits: u32,
    /// Allow tag sequences that need repair when decoded.
    #[arg(long)]
    unconstrained: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    AnnotatorInput,
    Lenient,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Span,
    Word,
}

#[derive(Clone, Copy, ValueEnum)]
enum GoldArg {
    Majority,
    BestMatched,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mv,
    Rel,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Span => Level::Span,
            LevelArg::Word => Level::Word,
        }
    }
}

impl From<GoldArg> for GoldType {
    fn from(g: GoldArg) -> Self {
        match g {
            GoldArg::Majority => GoldType::Majority,
            GoldArg::BestMatched => GoldType::BestMatched,
        }
    }
}

impl From<ModeArg> for TrainingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mv => TrainingMode::Mv,
            ModeArg::Rel => TrainingMode::Rel,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(open(path)?).with_context(|| format!("reading corpus {}", path.display()))
}

/// A file when `out` is given, standard output otherwise.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_predictions(preds: &Predictions, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    write_predictions(preds, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { config, out, truth, seed } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("cannot read {}", config.display()))?;
            let (mut synth, noise) = parse_synth_config(&text)?;
            if let Some(s) = seed {
                synth.seed = s;
            }
            let (corpus, truth_inputs) = generate(&synth, &noise)?;
            let mut w = create(&out)?;
            write_corpus(&corpus, &mut w)?;
            w.flush()?;
            let mut w = create(&truth)?;
            let keys: Vec<_> = truth_inputs.iter().map(|t| (t.key(), &t.truth)).collect();
            write_predictions(keys.iter().map(|(k, s)| (k, *s)), &mut w)?;
            w.flush()?;
            eprintln!(
                "{} inputs over {} documents, {} annotation records",
                corpus.len(),
                corpus.doc_ids().len(),
                corpus.total_records()
            );
        }
        Command::Validate { corpus, policy } => {
            let raw = read_raw(open(&corpus)?)
                .with_context(|| format!("reading corpus {}", corpus.display()))?;
            let raw: Vec<_> = raw.into_iter().map(|(_, r)| r).collect();
            let policy = match policy {
                PolicyArg::AnnotatorInput => Policy::AnnotatorInput,
                PolicyArg::Lenient => Policy::Lenient,
            };
            let violations = validate_raw(&raw, policy);
            if violations.is_empty() {
                println!("ok: {} inputs", raw.len());
            } else {
                for v in &violations {
                    println!("{v}");
                }
                eprintln!("{} violations", violations.len());
                return Ok(ExitCode::from(1));
            }
        }
        Command::Split { corpus: path, k, dev_fraction, seed, out } => {
            let corpus = load_corpus(&path)?;
            let plan = split_folds(&corpus, k, dev_fraction, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let mut w = create(&out.join("folds.json"))?;
            serde_json::to_writer_pretty(&mut w, &plan)?;
            writeln!(w)?;
            w.flush()?;
            for f in 0..plan.folds.len() {
                let dir = out.join(format!("fold{:02}", f + 1));
                let (train, dev, test) = plan.split(&corpus, f);
                for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
                    let mut w = create(&dir.join(format!("{name}.jsonl")))?;
                    write_corpus(part, &mut w)?;
                    w.flush()?;
                }
            }
        }
        Command::Aggregate { corpus, out } => {
            let corpus = load_corpus(&corpus)?;
            let preds = corpus
                .iter()
                .map(|input| Ok((input.key(), majority_vote(&input.records, input.n())?)))
                .collect::<Result<Predictions>>()?;
            emit_predictions(&preds, out.as_deref())?;
        }
        Command::Baseline { corpus, seed, out } => {
            let corpus = load_corpus(&corpus)?;
            emit_predictions(&random_baseline(&corpus, seed), out.as_deref())?;
        }
        Command::Train(args) => train_command(args)?,
        Command::Predict { model, corpus, out } => {
            let model = read_model(open(&model)?)
                .with_context(|| format!("reading model {}", model.display()))?;
            let corpus = load_corpus(&corpus)?;
            emit_predictions(&predict_corpus(&model, &corpus)?, out.as_deref())?;
        }
        Command::Evaluate { level, gold, pred, corpus, per_input } => {
            let corpus = load_corpus(&corpus)?;
            let preds = read_predictions(open(&pred)?)
                .with_context(|| format!("reading predictions {}", pred.display()))?;
            let report = evaluate(&preds, &corpus, level.into(), gold.into())?;
            println!("{report}");
            if per_input {
                for s in &report.per_input {
                    let sc = s.counts.scores();
                    println!(
                        "{}\t{}\t{}\t{}\t{}\t{}\t{:.1}",
                        s.doc_id,
                        s.label,
                        s.annotator_id.as_deref().unwrap_or("-"),
                        s.counts.matched,
                        s.counts.predicted,
                        s.counts.gold,
                        100.0 * sc.f1
                    );
                }
            }
            println!("{}", report.summary_json());
        }
        Command::Expert { corpus, level } => {
            let corpus = load_corpus(&corpus)?;
            let levels = match level {
                Some(l) => vec![l.into()],
                None => Level::ALL.to_vec(),
            };
            for level in levels {
                let report = expert_estimate(&corpus, level)?;
                println!("{report}");
                println!("{}", report.summary_json());
            }
        }
        Command::Experiment { config, out } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("cannot read {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new("."));
            let mut spec = ExperimentSpec::parse(&text, base)?;
            if let Some(out) = out {
                spec.out = out;
            }
            let corpus = load_corpus(&spec.corpus)?;
            let results = run_experiment(&spec, &corpus)?;
            results.write(&spec.out)?;
            print!("{}", results.render_table());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train_command(args: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let config = CrfConfig {
        hash_bits: args.hash_bits,
        constrained: !args.unconstrained,
    };
    let mode = args.mode.into();
    let defaults = Hyperparams::default();
    let epochs = args.epochs.unwrap_or(defaults.epochs);
    let l2 = args.l2.unwrap_or(defaults.l2);
    let hp = if args.tune {
        let Some(dev) = &args.dev else { bail!("--tune needs --dev") };
        let dev = load_corpus(dev)?;
        let grid: Vec<Hyperparams> = default_grid()
            .into_iter()
            .map(|h| Hyperparams { epochs, l2, ..h })
            .collect();
        let outcome = tune(&corpus, &dev, &grid, mode, &config, args.seed)?;
        for (h, f1) in grid.iter().zip(&outcome.dev_f1) {
            eprintln!("lr={} batch={} dev word F1 {:.1}", h.learning_rate, h.batch_size, 100.0 * f1);
        }
        outcome.best
    } else {
        Hyperparams {
            learning_rate: args.lr.unwrap_or(defaults.learning_rate),
            batch_size: args.batch.unwrap_or(defaults.batch_size),
            epochs,
            l2,
        }
    };
    eprintln!(
        "training lr={} batch={} epochs={} l2={}",
        hp.learning_rate, hp.batch_size, hp.epochs, hp.l2
    );
    let model = train(&corpus, mode, &hp, &config, args.seed)?;
    let mut w = create(&args.out)?;
    write_model(&model, &mut w)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

