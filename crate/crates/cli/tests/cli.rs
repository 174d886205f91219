use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn mv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiverse"))
        .args(args)
        .current_dir(dir)
        .env_remove("MULTIVERSE_TOP_N")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert_eq!(o.status.code(), Some(0), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    stdout(&o)
}

fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(mv(dir.path(), &["fixtures", "fx", "--h1", "60"]));
    dir
}

const CFG: &str = "fx/multiverse.toml";

#[test]
fn run_writes_tree_and_restarts() {
    let dir = fixture_dir();
    let first = ok(mv(dir.path(), &["--config", CFG, "run"]));
    assert!(first.contains("20 articles: 20 ok, 0 failed, 0 skipped; 1000 scored pairs"), "{first}");
    for sub in ["features", "reports", "models", "manifests"] {
        assert!(dir.path().join("out").join(sub).is_dir(), "{sub}");
    }
    let reports = fs::read_dir(dir.path().join("out/reports"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "md"))
        .count();
    assert_eq!(reports, 20);
    let second = ok(mv(dir.path(), &["--config", CFG, "run"]));
    assert!(second.contains("20 skipped"), "{second}");
    let hash = |s: &str| s.lines().last().unwrap().to_string();
    assert_eq!(hash(&first), hash(&second));
}

#[test]
fn validation_errors_exit_one() {
    let dir = fixture_dir();
    fs::remove_file(dir.path().join("fx/ranks.tsv")).unwrap();
    let o = mv(dir.path(), &["--config", CFG, "run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rank table not found") && stderr(&o).contains("ranks.tsv"), "{}", stderr(&o));

    assert_eq!(mv(dir.path(), &["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(mv(dir.path(), &["run"]).status.code(), Some(1), "missing --config");
    assert_eq!(mv(dir.path(), &["--help"]).status.code(), Some(0));
    let o = mv(dir.path(), &["ablate", "--combos", "ce-emb-rank,telepathy", "--dataset", "fx/h1/dataset.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("telepathy"));
}

#[test]
fn unknown_article_and_runtime_failures() {
    let dir = fixture_dir();
    let o = mv(dir.path(), &["--config", CFG, "report", "--article", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown article `nope`"));
    fs::write(dir.path().join("fx/search.jsonl"), "{not json\n").unwrap();
    let o = mv(dir.path(), &["--config", CFG, "run"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn env_overrides_apply() {
    let dir = fixture_dir();
    let o = Command::new(env!("CARGO_BIN_EXE_multiverse"))
        .args(["--config", CFG, "run"])
        .current_dir(dir.path())
        .env("MULTIVERSE_TOP_N", "4")
        .env("MULTIVERSE_REPORT_ROWS", "3")
        .output()
        .unwrap();
    let out = ok(o);
    assert!(out.contains("400 scored pairs"), "{out}");
}

#[test]
fn ablate_prints_three_rows() {
    let dir = fixture_dir();
    let out = ok(mv(
        dir.path(),
        &[
            "ablate",
            "--combos",
            "ce-emb-rank,me-emb-rank,ce-rank",
            "--dataset",
            "fx/h1/dataset.jsonl",
            "--evidence",
            "fx/h1/evidence",
        ],
    ));
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Features")).collect();
    assert_eq!(rows.len(), 3, "{out}");
    assert!(rows[0].starts_with("| CE Emb+Rank"));
    assert!(rows[1].starts_with("| ME Emb+Rank"));
    assert!(rows[2].starts_with("| CE Rank"));
    let csv = fs::read_to_string(dir.path().join("out/reports/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/reports/ablation.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn tune_theta_prints_grid_and_choice() {
    let dir = tempfile::tempdir().unwrap();
    let mut gold = String::from("sim,gold\n");
    for (s, g) in [(0.95, "support"), (0.7, "support"), (0.55, "support"), (0.45, "refute"), (0.2, "nei"), (0.05, "not_support")] {
        gold.push_str(&format!("{s},{g}\n"));
    }
    fs::write(dir.path().join("gold.csv"), gold).unwrap();
    let out = ok(mv(dir.path(), &["tune-theta", "--gold", "gold.csv"]));
    let grid: Vec<&str> = out.lines().filter(|l| l.starts_with("theta ")).collect();
    assert_eq!(grid.len(), 9, "{out}");
    // 0.45 and 0.2 sit above 0.1 but are not support: 4 of 6
    assert_eq!(grid[0], "theta 0.1\taccuracy 0.6667");
    assert_eq!(grid[4], "theta 0.5\taccuracy 1.0000");
    assert!(out.contains("chosen theta 0.5 (accuracy 1.0000, 6 pairs)"), "{out}");

    fs::write(dir.path().join("one.csv"), "sim,gold\n0.3,support\n0.9,support\n").unwrap();
    assert_eq!(mv(dir.path(), &["tune-theta", "--gold", "one.csv"]).status.code(), Some(1));
}

#[test]
fn report_formats() {
    let dir = fixture_dir();
    let md = ok(mv(dir.path(), &["--config", CFG, "report", "--article", "fake-01", "--format", "md", "--top", "3"]));
    assert!(md.starts_with("# Lottery winner"));
    assert!(md.contains("| 15947 | 0.00 |"), "{md}");
    let sections: Vec<&str> = md.split("\n## ").skip(1).collect();
    assert_eq!(sections.len(), 5);
    for s in sections {
        let rows = s.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Title")).count();
        assert!(rows <= 3, "{s}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("out/reports/fake-01.md")).unwrap(), md);
    let json = ok(mv(dir.path(), &["--config", CFG, "report", "--article", "fake-01", "--format", "json", "--top", "2"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v.get("verdict").is_none());
    assert_eq!(v["sections"][0]["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn featurize_train_evaluate_cv() {
    let dir = fixture_dir();
    ok(mv(dir.path(), &["--config", CFG, "run"]));
    let out = ok(mv(dir.path(), &["--config", CFG, "featurize", "--blocks", "ce-emb-rank+punct", "--split"]));
    assert!(out.contains("ce-emb-rank+punct.train.csv"), "{out}");
    let train_csv = "out/features/ce-emb-rank+punct.train.csv";
    let out = ok(mv(dir.path(), &["train", "--features", train_csv, "--model", "logistic"]));
    assert!(out.contains("logistic on 14 x "), "{out}");
    let model = "out/models/ce-emb-rank+punct.train.logistic.json";
    assert!(dir.path().join(model).is_file());
    let out = ok(mv(dir.path(), &["evaluate", "--model", model, "--features", "out/features/ce-emb-rank+punct.test.csv"]));
    assert!(out.starts_with("precision "), "{out}");
    assert!(dir.path().join("out/reports/eval-ce-emb-rank+punct.test.json").is_file());
    let schema = fs::read_to_string(dir.path().join("out/features/ce-emb-rank+punct.schema.json")).unwrap();
    assert!(schema.contains("\"ce-emb-rank\""));

    // a model trained on other columns is rejected
    ok(mv(dir.path(), &["--config", CFG, "featurize", "--blocks", "punct"]));
    let o = mv(dir.path(), &["evaluate", "--model", model, "--features", "out/features/punct.csv"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let out = ok(mv(
        dir.path(),
        &["cv", "--blocks", "ce-emb-rank", "--dataset", "fx/h1/dataset.jsonl", "--evidence", "fx/h1/evidence", "--folds", "5"],
    ));
    assert_eq!(out.lines().filter(|l| l.starts_with("fold ")).count(), 5, "{out}");
}

#[test]
fn retrieve_and_score() {
    let dir = fixture_dir();
    let out = ok(mv(
        dir.path(),
        &[
            "--config", CFG, "retrieve", "--article", "legit-01", "--langs", "en,fr", "--top", "3", "--provider",
            "fixture", "--snapshot-dir", "snaps", "--json",
        ],
    ));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["evidence"]["en"].as_array().unwrap().len(), 3);
    assert_eq!(v["evidence"].as_object().unwrap().len(), 2);
    assert!(dir.path().join("snaps").read_dir().unwrap().next().is_some());
    let o = mv(dir.path(), &["--config", CFG, "retrieve", "--article", "legit-01", "--provider", "live"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not match"));

    let out = ok(mv(dir.path(), &["--config", CFG, "score", "--article", "legit-01", "--scorer", "nli"]));
    assert_eq!(out.lines().filter(|l| l.contains("\thttp")).count(), 50, "{out}");
    let ev = fs::read_to_string(dir.path().join("out/features/evidence/legit-01.json")).unwrap();
    assert!(ev.contains("\"nli\""));
}

#[test]
fn ingest_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::new();
    for i in 0..12 {
        let label = if i % 2 == 0 { "fake" } else { "legit" };
        rows.push_str(&format!("{{\"id\":\"a{i}\",\"title\":\"Title {i}\",\"label\":\"{label}\"}}\n"));
    }
    fs::write(dir.path().join("good.jsonl"), &rows).unwrap();
    let out = ok(mv(dir.path(), &["--seed", "3", "ingest", "good.jsonl", "--split"]));
    assert!(out.contains("12 articles (6 fake, 6 legit)"), "{out}");
    assert!(dir.path().join("out/train.jsonl").is_file());
    rows.push_str("{\"id\":\"bad\",\"label\":\"fake\"}\n");
    fs::write(dir.path().join("bad.jsonl"), &rows).unwrap();
    let o = mv(dir.path(), &["ingest", "bad.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 13"), "{}", stderr(&o));
    let o = mv(dir.path(), &["ingest", "bad.jsonl", "--lenient"]);
    assert!(stderr(&o).contains("skipped row 13"));
    assert!(ok(o).contains("12 articles"));
}

#[test]
fn study_create_stats_and_serve() {
    let dir = fixture_dir();
    let out = ok(mv(
        dir.path(),
        &[
            "--config", CFG, "study", "create", "--id", "pilot", "--annotators", "a,b,c", "--per-annotator", "20",
            "--per-article", "3",
        ],
    ));
    assert!(out.contains("1000 pairs over 20 articles, 3 annotators"), "{out}");
    let def = "out/study/pilot.json";
    let out = ok(mv(dir.path(), &["study", "stats", "--study", def]));
    assert!(out.contains("- labels: 0 / 3000"), "{out}");
    assert!(out.contains("alpha (pair labels): n/a"));
    let o = mv(dir.path(), &["study", "create", "--id", "x", "--annotators", "a,b", "--per-annotator", "3", "--per-article", "3", "--config", CFG]);
    assert_eq!(o.status.code(), Some(1), "infeasible plan");

    let mut child = Command::new(env!("CARGO_BIN_EXE_multiverse"))
        .args(["study", "serve", "--study", def, "--port", "0"])
        .current_dir(dir.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server exited").unwrap();
        if let Some(a) = line.strip_prefix("study api listening on http://") {
            break a.to_string();
        }
    };
    let mut s = std::net::TcpStream::connect(&addr).unwrap();
    s.write_all(b"GET /study/pilot/next-task?annotator=b HTTP/1.1\r\nhost: x\r\nconnection: close\r\n\r\n")
        .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"kind\":\"label\""), "{resp}");
}
