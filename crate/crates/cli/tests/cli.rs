use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spanlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spanlab"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, docs: usize) {
    fs::write(dir.join("synth.cfg"), format!("# small\nn_docs = {docs}\nseed = 4\n")).unwrap();
    let o = spanlab(
        dir,
        &["synth", "--config", "synth.cfg", "--out", "corpus.jsonl", "--truth", "truth.jsonl"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["validate", "--nope"]] {
        let o = spanlab(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    }
    let o = spanlab(dir.path(), &["evaluate", "--level", "chunk"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("possible values: span, word"));
}

#[test]
fn validate_lists_short_annotator_span() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.jsonl"),
        concat!(
            r#"{"doc_id":"d1","words":["a","b","c","d","e"],"label":"L","annotations":[{"annotator_id":"x","spans":[[1,2]]},{"annotator_id":"y","spans":[[1,3]]}]}"#,
            "\n"
        ),
    )
    .unwrap();
    let o = spanlab(dir.path(), &["validate", "--corpus", "c.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("d1/L/x: span (1,2) shorter than 3 words"), "{}", stdout(&o));

    let o = spanlab(dir.path(), &["validate", "--corpus", "c.jsonl", "--policy", "lenient"]);
    assert!(o.status.success());
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = spanlab(dir.path(), &["aggregate", "--corpus", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn synth_writes_corpus_and_truth_in_order() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 20);
    let corpus = fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    let truth = fs::read_to_string(dir.path().join("truth.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), truth.lines().count());
    let o = spanlab(dir.path(), &["validate", "--corpus", "corpus.jsonl"]);
    assert!(o.status.success(), "{}", stdout(&o));

    fs::write(dir.path().join("bad.cfg"), "n_docs = 5\ncolour = blue\n").unwrap();
    let o = spanlab(
        dir.path(),
        &["synth", "--config", "bad.cfg", "--out", "x.jsonl", "--truth", "y.jsonl"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluating_the_majority_vote_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 30);
    let o = spanlab(dir.path(), &["aggregate", "--corpus", "corpus.jsonl", "--out", "mv.jsonl"]);
    assert!(o.status.success());
    for level in ["span", "word"] {
        let o = spanlab(
            dir.path(),
            &["evaluate", "--level", level, "--gold", "majority", "--pred", "mv.jsonl", "--corpus", "corpus.jsonl"],
        );
        assert!(o.status.success());
        let out = stdout(&o);
        assert!(out.contains("100.0    100.0    100.0"), "{out}");
        let json: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
        assert_eq!(json["f1"], 1.0);
        assert_eq!(json["level"], level);
    }
}

#[test]
fn per_input_rows_name_the_best_matched_annotator() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 10);
    spanlab(dir.path(), &["baseline", "--corpus", "corpus.jsonl", "--seed", "3", "--out", "rb.jsonl"]);
    let o = spanlab(
        dir.path(),
        &["evaluate", "--level", "word", "--gold", "best-matched", "--pred", "rb.jsonl", "--corpus", "corpus.jsonl", "--per-input"],
    );
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.contains('\t')).collect();
    let corpus_lines = fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap().lines().count();
    assert_eq!(rows.len(), corpus_lines);
    assert!(rows.iter().all(|r| r.split('\t').nth(2).unwrap().starts_with('a')));
}

#[test]
fn missing_prediction_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 5);
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = spanlab(
        dir.path(),
        &["evaluate", "--level", "span", "--gold", "majority", "--pred", "empty.jsonl", "--corpus", "corpus.jsonl"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no prediction for input"));
}

#[test]
fn split_train_predict_round() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40);
    let o = spanlab(
        dir.path(),
        &["split", "--corpus", "corpus.jsonl", "--k", "4", "--dev-fraction", "0.2", "--seed", "1", "--out", "folds"],
    );
    assert!(o.status.success());
    let plan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("folds/folds.json")).unwrap()).unwrap();
    assert_eq!(plan["folds"].as_array().unwrap().len(), 4);

    let o = spanlab(
        dir.path(),
        &[
            "train", "--mode", "rel", "--corpus", "folds/fold01/train.jsonl", "--dev",
            "folds/fold01/dev.jsonl", "--tune", "--epochs", "2", "--hash-bits", "12", "--out", "m.txt",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = fs::read_to_string(dir.path().join("m.txt")).unwrap();
    assert!(model.contains("spanlab-feat-v1/fnv1a64/12"));

    let o = spanlab(
        dir.path(),
        &["predict", "--model", "m.txt", "--corpus", "folds/fold01/test.jsonl", "--out", "p.jsonl"],
    );
    assert!(o.status.success());
    let o = spanlab(
        dir.path(),
        &["evaluate", "--level", "span", "--gold", "majority", "--pred", "p.jsonl", "--corpus", "folds/fold01/test.jsonl"],
    );
    assert!(o.status.success());

    // --tune without --dev is a usage error
    let o = spanlab(dir.path(), &["train", "--mode", "mv", "--corpus", "corpus.jsonl", "--tune", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_writes_results_directory() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40);
    fs::write(
        dir.path().join("exp.cfg"),
        "corpus = corpus.jsonl\nout = res\nk = 2\nseeds = 1, 2, 3\nlearning_rates = 0.1\nbatch_sizes = 8\nepochs = 2\nhash_bits = 12\n",
    )
    .unwrap();
    let o = spanlab(dir.path(), &["experiment", "--config", "exp.cfg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = dir.path().join("res");
    let table = fs::read_to_string(res.join("results.txt")).unwrap();
    for method in ["Random", "MV", "ReL", "Expert"] {
        assert!(table.contains(method));
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("results.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 12);
    assert_eq!(json["config"]["seeds"], serde_json::json!([1, 2, 3]));
    for row in json["rows"].as_array().unwrap() {
        assert_eq!(row["f1"]["runs"].as_array().unwrap().len(), 3);
    }
    let preds = fs::read_dir(res.join("predictions")).unwrap().count();
    assert_eq!(preds, 2 * 3 * 3);
    assert!(res.join("predictions/fold02_rel_seed3.jsonl").exists());
}
