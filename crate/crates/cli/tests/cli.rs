use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn euslm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_euslm")).args(args).output().expect("run euslm")
}

fn ok(args: &[&str]) -> Output {
    let out = euslm(args);
    assert!(out.status.success(), "euslm {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CORPUS: &str = "#source:wiki
Etxe berria erosi dute herrian.
Gaur goizean euria egin du.
Bihar eguzkia aterako da.

Mendiko bidea luzea da.
Etxe zaharra saldu dute.

Itsasoa lasai dago gaur.
Portuan txalupak daude.
Arrantzaleak goiz atera dira.

Herriko jaiak hasi dira.
Kalean jende asko dago.
";

#[test]
fn reference_ner_row_scores_one_third() {
    let dir = tempfile::tempdir().unwrap();
    let tokens = "Txetxeniako gai horretan agerian geratu da Estatu Batuek eta Mendebaldeko Europak eman dioten sustengua.";
    let gold = "B-LOC O O O O O B-ORG I-ORG O B-ORG I-ORG O O O";
    let mbert = "B-LOC O O O O O B-LOC I-LOC O B-LOC I-LOC O O O";
    let mut file = String::new();
    for ((t, g), p) in tokens.split(' ').zip(gold.split(' ')).zip(mbert.split(' ')) {
        file.push_str(&format!("{t} {g} {p}\n"));
    }
    let pred = dir.path().join("mbert.conll");
    std::fs::write(&pred, file).unwrap();
    let out = dir.path().join("eval");
    ok(&["--out", s(&out), "eval", "--task", "ner", "--predictions", s(&pred), "--model-name", "mBERT", "--family", "bert"]);
    let report = json(&out.join("report.json"));
    for k in ["precision", "recall", "f1"] {
        assert_eq!(report["metrics"][k], 33.33, "{k}");
    }
    assert_eq!(report["model"], "mBERT");
}

#[test]
fn classification_eval_reports_micro_and_macro() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.tsv");
    std::fs::write(&pred, "a\ta\na\tb\nb\tb\nb\tb\n").unwrap();
    let out = dir.path().join("eval");
    ok(&["--out", s(&out), "eval", "--task", "classification", "--predictions", s(&pred)]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["metrics"]["micro_f1"], 75.0);
    // a: P 1, R 0.5 -> 66.67; b: P 2/3, R 1 -> 80
    assert_eq!(report["metrics"]["macro_f1"], 73.33);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, CORPUS).unwrap();
    let run = |name: &str| {
        let vocab = dir.path().join(format!("{name}-vocab"));
        let data = dir.path().join(format!("{name}-data"));
        ok(&["--seed", "8", "--out", s(&vocab), "vocab-train", "--corpus", s(&corpus), "--target-size", "80"]);
        let v = vocab.join("vocab.txt");
        ok(&["--seed", "8", "--out", s(&data), "pretrain-data", "--corpus", s(&corpus), "--vocab", s(&v), "--seq-len", "32", "--examples", "40", "--format", "binary"]);
        let files = ["phase-32.bin", "phases.json", "masking.json"].map(|f| std::fs::read(data.join(f)).unwrap());
        (std::fs::read(v).unwrap(), files)
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, CORPUS).unwrap();
    let first = dir.path().join("first");
    ok(&["--seed", "4", "--out", s(&first), "vocab-train", "--corpus", s(&corpus), "--target-size", "70", "--em-iterations", "3"]);
    let manifest = std::fs::read_to_string(first.join("manifest.toml")).unwrap();
    let table: toml::Table = manifest.parse().unwrap();
    assert_eq!(table["seed"].as_integer(), Some(4));
    assert_eq!(table["manifest"]["command"].as_str(), Some("vocab-train"));
    assert_eq!(table["vocab-train"]["target-size"].as_integer(), Some(70));

    let second = dir.path().join("second");
    ok(&["--config", s(&first.join("manifest.toml")), "--out", s(&second), "vocab-train"]);
    assert_eq!(std::fs::read(first.join("vocab.txt")).unwrap(), std::fs::read(second.join("vocab.txt")).unwrap());
}

#[test]
fn command_line_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, CORPUS).unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, format!("seed = 2\n[split]\ncorpus = {:?}\nratios = [0.5, 0.5]\n", s(&corpus))).unwrap();
    let out = dir.path().join("split");
    ok(&["--config", s(&config), "--out", s(&out), "split", "--names", "left,right"]);
    assert!(out.join("left.txt").exists() && out.join("right.txt").exists());
    let table: toml::Table = std::fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(table["seed"].as_integer(), Some(2));
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[pretrain]\nlearning-rat = 0.1\n").unwrap();
    let out = euslm(&["--config", s(&config), "pretrain", "--data", "x", "--vocab", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning-rat"));

    assert_eq!(euslm(&["stats"]).status.code(), Some(2));
    assert_eq!(euslm(&["--threads", "0", "grad-check"]).status.code(), Some(2));
    let out = dir.path().join("split");
    assert_eq!(euslm(&["--out", s(&out), "split", "--corpus", "c", "--ratios", "0.5,0.6"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = euslm(&["--out", s(dir.path()), "stats", "--corpus", s(&dir.path().join("absent.txt"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn failed_gradient_check_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = euslm(&["--out", s(dir.path()), "grad-check", "--tolerance", "1e-30"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(json(&dir.path().join("report.json"))["max_relative_error"].as_f64().unwrap() > 1e-30);
}

#[test]
fn stats_table_and_records_agree() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, CORPUS).unwrap();
    let out = dir.path().join("stats");
    let printed = ok(&["--out", s(&out), "stats", "--corpus", s(&corpus)]);
    let table = String::from_utf8(printed.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("Total") && l.contains(" 4 ") && l.contains(" 10 ") && l.contains(" 41 ")), "{table}");
    let records: Vec<Value> = std::fs::read_to_string(out.join("stats.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(records.iter().any(|r| r["tokens"] == 41), "{records:?}");
}
