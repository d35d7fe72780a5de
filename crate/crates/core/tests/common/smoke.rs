//! End-to-end run of the command-line tool on a small synthetic corpus.

use std::fs;
use std::path::Path;
use std::process::Command;

use bidaf_sa::cli::{AttentionDump, PredictionRecord, SupervisionRecord};
use bidaf_sa::data::load_corpus;
use bidaf_sa::supervision::SupervisionKind;
use serde_json::Value;

use super::{dense, oracle_corefall};

pub const SMOKE_CONFIG: &str = r#"
[model]
variant = "early"
early_layers = 2
heads = 2
d_model = 16
hidden = 8
word_dim = 8
char_dim = 4
char_filters = 8
char_width = 3

[[model.supervision]]
kind = "corefall"
location = "early"
layer = 1
head = 0

[train]
batch_size = 16
warmup = 20
ema_decay = 0.9
"#;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bidaf-sa"))
}

/// Runs the tool and returns (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> Result<String, String> {
    let (code, out, err) = run(args);
    if code == 0 {
        Ok(out)
    } else {
        Err(format!("`{}` exited {code}: {err}", args.join(" ")))
    }
}

fn check(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// synth, validate, build-supervision, train (1 seed, 2 epochs), eval and
/// inspect-attention, checking each output. Returns a one-line summary.
pub fn cli_smoke(dir: &Path) -> Result<String, String> {
    let train = dir.join("train.jsonl");
    let train2 = dir.join("train2.jsonl");
    let dev = dir.join("dev.jsonl");
    let config = dir.join("config.toml");
    fs::write(&config, SMOKE_CONFIG).map_err(|e| e.to_string())?;

    ok(&["synth", "--count", "200", "--seed", "3", "--out", s(&train)])?;
    ok(&["synth", "--count", "200", "--seed", "3", "--out", s(&train2)])?;
    check(
        read(&train)? == read(&train2)?,
        "synth is not byte-identical for equal seeds",
    )?;
    check(read(&train)?.lines().count() == 200, "synth line count")?;
    ok(&["synth", "--count", "40", "--seed", "4", "--out", s(&dev)])?;
    let v = ok(&["validate", s(&train)])?;
    check(v.contains("200 valid, 0 rejected"), "validator rejected synthetic data")?;

    let sup = dir.join("corefall.jsonl");
    let stats = ok(&[
        "build-supervision",
        "--corpus",
        s(&train),
        "--type",
        "corefall,depparse",
        "--out",
        s(&sup),
    ])?;
    check(stats.contains("mean_k"), "density statistics missing")?;
    let corpus = load_corpus(&train).map_err(|e| e.to_string())?;
    let mut seen = 0;
    for line in read(&sup)?.lines() {
        let rec: SupervisionRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let inst = corpus.instances.iter().find(|i| i.id == rec.id).ok_or("unknown id")?;
        let ann = inst.annotation.as_ref().ok_or("no annotation")?;
        match rec.matrix.kind {
            SupervisionKind::CorefAll => {
                check(
                    dense(&rec.matrix) == oracle_corefall(ann),
                    "corefall differs from oracle",
                )?;
                seen += 1;
            }
            SupervisionKind::DepParse => {
                for (i, j) in rec.matrix.entries() {
                    check(
                        ann.sentence_of(i) == ann.sentence_of(j),
                        "depparse entry crosses a sentence",
                    )?;
                }
            }
            _ => return Err("unexpected kind".into()),
        }
    }
    check(seen == 200, "one corefall record per instance")?;
    check(
        run(&[
            "build-supervision",
            "--corpus",
            s(&train),
            "--type",
            "bogus",
            "--out",
            s(&sup),
        ])
        .0 == 1,
        "unknown supervision type is not a usage error",
    )?;

    let out = dir.join("run");
    let missing = dir.join("missing.jsonl");
    let (code, _, err) = run(&[
        "train",
        "--config",
        s(&config),
        "--train",
        s(&missing),
        "--dev",
        s(&dev),
        "--out",
        s(&dir.join("bad")),
    ]);
    check(
        code == 2 && err.contains("missing.jsonl"),
        "missing corpus is not a data error",
    )?;
    let train_args = |o: &Path| {
        vec![
            "train".to_string(),
            "--config".into(),
            s(&config).into(),
            "--train".into(),
            s(&train).into(),
            "--dev".into(),
            s(&dev).into(),
            "--seeds".into(),
            "1".into(),
            "--epochs".into(),
            "2".into(),
            "--out".into(),
            s(o).into(),
        ]
    };
    let args: Vec<String> = train_args(&out);
    let report = ok(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    check(report.contains("mean"), "training summary missing")?;
    let metrics = read(&out.join("seed-1/metrics.jsonl"))?;
    let epochs = metrics.lines().filter(|l| l.contains("\"record\":\"epoch\"")).count();
    check(epochs == 2, "expected two epoch records")?;
    for f in [
        "manifest.json",
        "summary.json",
        "config.toml",
        "vocab.json",
        "seed-1/best.ckpt",
        "seed-1/best_raw.ckpt",
    ] {
        check(out.join(f).exists(), &format!("{f} not written"))?;
    }
    let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))?).map_err(|e| e.to_string())?;
    check(
        manifest["command"] == "train" && manifest["seeds"][0] == 1,
        "manifest content",
    )?;

    let eval_dir = dir.join("eval");
    let text = ok(&[
        "eval",
        "--run",
        s(&out),
        "--corpus",
        s(&dev),
        "--subsets",
        "pos,entity",
        "--out",
        s(&eval_dir),
    ])?;
    check(text.contains("all"), "eval report not printed")?;
    let summary: Value = serde_json::from_str(&read(&eval_dir.join("eval.json"))?).map_err(|e| e.to_string())?;
    let acc = summary["accuracy"].as_f64().ok_or("accuracy missing")?;
    check((0.0..=1.0).contains(&acc), "accuracy out of range")?;
    let subsets = summary["subset_accuracies"].as_object().ok_or("subsets missing")?;
    check(
        subsets.contains_key("pos:noun") && subsets.contains_key("entity:person"),
        "subset rows missing",
    )?;
    let preds = eval_dir.join("predictions.jsonl");
    for line in read(&preds)?.lines() {
        serde_json::from_str::<PredictionRecord>(line).map_err(|e| e.to_string())?;
    }
    let agree = ok(&[
        "eval",
        "--run",
        s(&out),
        "--corpus",
        s(&dev),
        "--agree",
        s(&preds),
        "--out",
        s(&dir.join("eval2")),
    ])?;
    check(agree.contains("agreement 1.0000"), "self-agreement is not 1")?;
    let (code, _, _) = run(&["eval", "--run", s(&out), "--corpus", s(&dev), "--checkpoint", s(&dev)]);
    check(code == 2, "a foreign checkpoint is not rejected")?;

    let dev_corpus = load_corpus(&dev).map_err(|e| e.to_string())?;
    let id = dev_corpus.instances[0].id.clone();
    let dump_path = dir.join("attention.json");
    ok(&[
        "inspect-attention",
        "--run",
        s(&out),
        "--corpus",
        s(&dev),
        "--id",
        &id,
        "--out",
        s(&dump_path),
    ])?;
    let dump: AttentionDump = serde_json::from_str(&read(&dump_path)?).map_err(|e| e.to_string())?;
    check(dump.heads.len() == 4, "expected 2 layers x 2 heads")?;
    let supervised = dump
        .heads
        .iter()
        .find(|h| h.supervision.is_some())
        .ok_or("no supervised head")?;
    check(
        supervised.target_mass.is_some(),
        "target mass missing on the supervised head",
    )?;
    let (code, _, _) = run(&[
        "inspect-attention",
        "--run",
        s(&out),
        "--corpus",
        s(&dev),
        "--id",
        "nope",
        "--out",
        s(&dump_path),
    ]);
    check(code != 0, "unknown instance id accepted")?;

    let fresh_path = dir.join("fresh.json");
    ok(&[
        "inspect-attention",
        "--run",
        s(&out),
        "--corpus",
        s(&dev),
        "--id",
        &id,
        "--untrained",
        "--out",
        s(&fresh_path),
    ])?;
    let fresh: AttentionDump = serde_json::from_str(&read(&fresh_path)?).map_err(|e| e.to_string())?;
    // Mean row entropy relative to the uniform row's.
    let n = fresh.context.len() as f64;
    let rows: Vec<&Vec<f64>> = fresh.heads.iter().flat_map(|h| h.attention.iter()).collect();
    let entropy = rows
        .iter()
        .map(|r| -r.iter().filter(|&&a| a > 0.0).map(|&a| a * a.ln()).sum::<f64>() / n.ln())
        .sum::<f64>()
        / rows.len() as f64;
    check(
        entropy > 0.9,
        &format!("untrained attention far from uniform (relative entropy {entropy:.3})"),
    )?;

    let again = dir.join("run-again");
    let args: Vec<String> = train_args(&again);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    check(
        read(&again.join("seed-1/metrics.jsonl"))? == metrics,
        "rerun produced different metrics",
    )?;
    Ok(format!(
        "dev accuracy {acc:.3} after 2 epochs, untrained attention relative entropy {entropy:.3}"
    ))
}
