use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use selfplay_csc::harness::RunConfig;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfplay-csc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn corrupt_counts_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    let lines: String = (0..100).map(|i| format!("{}\n", "一丁七万丈三上下".repeat(1 + i % 2))).collect();
    fs::write(&corpus, lines).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["corrupt", "--corpus", s(&corpus), "--copies", "4", "--no-filter", "--seed", "42", "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let pairs = fs::read(a.join("pairs.jsonl")).unwrap();
    assert_eq!(pairs.iter().filter(|&&c| c == b'\n').count(), 400);
    assert_eq!(pairs, fs::read(b.join("pairs.jsonl")).unwrap());
    assert_eq!(
        fs::read(a.join("corrupt_stats.json")).unwrap(),
        fs::read(b.join("corrupt_stats.json")).unwrap()
    );
    let echo = fs::read_to_string(a.join("config.toml")).unwrap();
    let cfg: RunConfig = toml::from_str(&echo).unwrap();
    assert_eq!((cfg.copies, cfg.filter, cfg.seed), (4, false, 42));
}

#[test]
fn train_replays_and_round_trips_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = bin(&["corrupt", "--out", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pairs = data.join("pairs.jsonl");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&[
            "train", "--pairs", s(&pairs), "--total-updates", "40", "--batch-size", "8", "--seed", "42", "--out", s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["checkpoint.cecp", "train_log.jsonl", "eval.json", "telemetry.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let log = fs::read_to_string(a.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 40);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["t", "lr", "mean_reward", "grad_norm", "clip_fraction", "kl", "baseline_bias", "wall_ms"] {
        assert!(first.get(key).is_some(), "{key}");
    }

    let e = dir.path().join("e");
    let o = bin(&["eval", "--checkpoint", s(&a.join("checkpoint.cecp")), "--pairs", s(&pairs), "--holdout", "--out", s(&e)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let t: serde_json::Value = serde_json::from_slice(&fs::read(a.join("eval.json")).unwrap()).unwrap();
    assert_eq!(m, t["trained"]);
}

#[test]
fn zero_updates_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["train", "--total-updates", "0", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("train_log.jsonl")).unwrap(), b"");
    let ckpt = selfplay_csc::trainer::Checkpoint::read(&dir.path().join("checkpoint.cecp")).unwrap();
    assert!(ckpt.params.theta.iter().all(|&v| v == 0.0));
}

#[test]
fn empty_test_set_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["train", "--total-updates", "0", "--out", s(dir.path())]);
    assert!(o.status.success());
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = bin(&[
        "eval", "--checkpoint", s(&dir.path().join("checkpoint.cecp")), "--pairs", s(&empty), "--out", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty test set"));
}

#[test]
fn reward_score_ablation_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("req.jsonl");
    fs::write(
        &input,
        "{\"reference\":\"一丁七万丈三\",\"candidates\":[\"一丁七万丈三\",\"一丁七万丈上\",\"一丁七万丈上\",\"下丁\"]}\n",
    )
    .unwrap();
    for (alpha, column) in [("1", "r_pair"), ("0", "r_cons")] {
        let o = bin(&["reward-score", "--input", s(&input), "--alpha", alpha, "--out", s(dir.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
        let recs: Vec<serde_json::Value> = String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert_eq!(r["reward"], r[column]);
            assert!(r.get("r_pair").is_some() && r.get("r_cons").is_some());
        }
    }
}

#[test]
fn theory_check_passes_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["theory-check", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines = String::from_utf8(o.stdout).unwrap();
    for l in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        for key in ["check", "seed", "measured", "bound", "pass"] {
            assert!(v.get(key).is_some());
        }
        assert_eq!(v["pass"], true);
    }
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "tua = 0.7\n").unwrap();
    let o = bin(&["theory-check", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tua"));
    let o = bin(&["train", "--set", "clip_epsilon=0.3", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("clip_epsilon"));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn io_and_table_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["corrupt", "--corpus", "/nonexistent/corpus.txt", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/corpus.txt"));
    let tables = dir.path().join("t.tsv");
    fs::write(&tables, "hom\ta\tb\nbogus line\n").unwrap();
    let o = bin(&["corrupt", "--tables", s(&tables), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn encode_cache_feeds_training() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["encode-cache", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cache = dir.path().join("embeddings.cece");
    let with = dir.path().join("with");
    let without = dir.path().join("without");
    let o = bin(&[
        "train", "--total-updates", "5", "--set", &format!("embedding_cache={:?}", s(&cache)), "--out", s(&with),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin(&["train", "--total-updates", "5", "--out", s(&without)]);
    assert!(o.status.success());
    // cached vectors are the same encoder rounded to f32, so the data and
    // the untrained policy agree exactly
    let eval = |d: &Path| -> serde_json::Value { serde_json::from_slice(&fs::read(d.join("eval.json")).unwrap()).unwrap() };
    let (a, b) = (eval(&with), eval(&without));
    assert_eq!(a["untrained"], b["untrained"]);
    assert_eq!(a["test_records"], b["test_records"]);
    let o = bin(&[
        "train", "--total-updates", "1", "--set", &format!("embedding_cache={:?}", s(&cache)), "--set",
        "encoder_dim=128", "--out", s(&with),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
