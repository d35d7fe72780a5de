mod common;

use std::fs;

use common::smoke::{cli_smoke, run};

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    if let Err(e) = cli_smoke(dir.path()) {
        panic!("{e}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["train", "--config"]).0, 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(
        &bad,
        "{\"id\": \"a\", \"context\": [], \"query\": [\"q\"], \"answer\": \"x\"}\nnot json\n",
    )
    .unwrap();
    let (code, out, _) = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(out.contains("line 1: empty context"));
    assert!(out.contains("line 2: schema"));
    assert!(out.contains("0 valid, 2 rejected"));

    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[model]\nheads = 3\n").unwrap();
    let corpus = dir.path().join("t.jsonl");
    assert_eq!(run(&["synth", "--count", "5", "--out", corpus.to_str().unwrap()]).0, 0);
    let (code, _, err) = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--train",
        corpus.to_str().unwrap(),
        "--dev",
        corpus.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
}
